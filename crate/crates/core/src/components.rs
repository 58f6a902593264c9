//! 4-connected component labelling over arbitrary per-pixel keys.

/// Connected components of a raster, numbered in raster order of their first pixel.
#[derive(Debug, Clone)]
pub struct Components {
    pub ids: Vec<u32>,
    pub sizes: Vec<usize>,
    /// Raster index of the first pixel of each component.
    pub first_pixel: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }
}

/// Labels maximal 4-connected runs of pixels that share an equal key.
pub fn connected_components<T: PartialEq>(width: usize, height: usize, keys: &[T]) -> Components {
    debug_assert_eq!(keys.len(), width * height);
    const UNSET: u32 = u32::MAX;
    let mut ids = vec![UNSET; keys.len()];
    let mut sizes = Vec::new();
    let mut first_pixel = Vec::new();
    let mut stack = Vec::new();

    for start in 0..keys.len() {
        if ids[start] != UNSET {
            continue;
        }
        let id = sizes.len() as u32;
        ids[start] = id;
        stack.push(start);
        let mut size = 0;
        while let Some(p) = stack.pop() {
            size += 1;
            let (x, y) = (p % width, p / width);
            let mut visit = |q: usize| {
                if ids[q] == UNSET && keys[q] == keys[start] {
                    ids[q] = id;
                    stack.push(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < width {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - width);
            }
            if y + 1 < height {
                visit(p + width);
            }
        }
        sizes.push(size);
        first_pixel.push(start);
    }

    Components {
        ids,
        sizes,
        first_pixel,
    }
}

/// Calls `f(p, q)` for every horizontally or vertically adjacent pixel pair, each pair once.
pub fn for_each_adjacent_pair(width: usize, height: usize, mut f: impl FnMut(usize, usize)) {
    for y in 0..height {
        for x in 0..width {
            let p = y * width + x;
            if x + 1 < width {
                f(p, p + 1);
            }
            if y + 1 < height {
                f(p, p + width);
            }
        }
    }
}
