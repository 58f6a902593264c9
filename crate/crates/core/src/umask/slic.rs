//! Grayscale SLIC superpixels with deterministic connectivity enforcement.

use rayon::prelude::*;

use crate::components::{connected_components, for_each_adjacent_pair};
use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Stop iterating once no center moves further than this (pixels).
pub const CONVERGENCE_PX: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicParams {
    /// Requested number of superpixels, `M`.
    pub superpixels: usize,
    /// Weight of spatial distance relative to intensity distance (0-255 scale).
    pub compactness: f64,
    pub max_iters: usize,
}

impl SlicParams {
    pub const DEFAULT_COMPACTNESS: f64 = 10.0;
    pub const DEFAULT_MAX_ITERS: usize = 10;

    pub fn new(superpixels: usize) -> Self {
        Self {
            superpixels,
            compactness: Self::DEFAULT_COMPACTNESS,
            max_iters: Self::DEFAULT_MAX_ITERS,
        }
    }
}

impl Default for SlicParams {
    fn default() -> Self {
        Self::new(512)
    }
}

/// A total partition of an image into `count` labelled superpixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperpixelLabeling {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    count: usize,
    iterations_run: usize,
}

impl SuperpixelLabeling {
    /// Checks that every label is in `0..count` and that every label is used.
    pub fn new(
        width: usize,
        height: usize,
        labels: Vec<u32>,
        count: usize,
        iterations_run: usize,
    ) -> Result<Self> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(Error::Parameter(format!(
                "label buffer has {} entries for {width}x{height}",
                labels.len()
            )));
        }
        let mut used = vec![false; count];
        for &l in &labels {
            let l = l as usize;
            if l >= count {
                return Err(Error::Validation(format!("label {l} outside 0..{count}")));
            }
            used[l] = true;
        }
        if let Some(l) = used.iter().position(|u| !u) {
            return Err(Error::Validation(format!("label {l} has no pixels")));
        }
        Ok(Self {
            width,
            height,
            labels,
            count,
            iterations_run,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn iterations_run(&self) -> usize {
        self.iterations_run
    }

    /// Pixel count per label.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }

    /// True when every superpixel is a single 4-connected region.
    pub fn is_connected(&self) -> bool {
        connected_components(self.width, self.height, &self.labels).count() == self.count
    }
}

#[derive(Debug, Clone, Copy)]
struct Center {
    x: f64,
    y: f64,
    v: f64,
}

/// Number of grid columns and rows used to seed `m` superpixels; never more than `m` cells.
fn grid_shape(width: usize, height: usize, step: f64) -> (usize, usize) {
    let cells = |len: usize| ((len as f64 / step + 1e-9).floor() as usize).clamp(1, len);
    (cells(width), cells(height))
}

/// Clusters a Unit8 image into at most `params.superpixels` connected superpixels.
pub fn slic(img: &GrayImage, params: &SlicParams) -> Result<SuperpixelLabeling> {
    let intensity = img.to_u8()?;
    let (w, h) = img.dims();
    let n = w * h;
    let m = params.superpixels;
    if m == 0 || m > n {
        return Err(Error::Parameter(format!(
            "superpixel count {m} must be in 1..={n} for a {w}x{h} image"
        )));
    }
    if !(params.compactness > 0.0 && params.compactness.is_finite()) {
        return Err(Error::Parameter(format!(
            "compactness must be positive, got {}",
            params.compactness
        )));
    }

    let step = (n as f64 / m as f64).sqrt();
    let (mut nx, mut ny) = grid_shape(w, h, step);
    while nx * ny > m {
        if ny >= nx {
            ny -= 1;
        } else {
            nx -= 1;
        }
    }
    if nx == w && ny == h {
        return SuperpixelLabeling::new(w, h, (0..n as u32).collect(), n, 0);
    }

    let (cell_w, cell_h) = (w as f64 / nx as f64, h as f64 / ny as f64);
    let mut centers: Vec<Center> = (0..ny)
        .flat_map(|j| (0..nx).map(move |i| (i, j)))
        .map(|(i, j)| {
            let x = (i as f64 + 0.5) * cell_w - 0.5;
            let y = (j as f64 + 0.5) * cell_h - 0.5;
            let (px, py) = (x.round() as usize, y.round() as usize);
            Center {
                x,
                y,
                v: f64::from(intensity[py * w + px]),
            }
        })
        .collect();
    let mut labels: Vec<u32> = (0..n)
        .map(|p| {
            let (x, y) = (p % w, p / w);
            let i = ((x * nx) / w).min(nx - 1);
            let j = ((y * ny) / h).min(ny - 1);
            (j * nx + i) as u32
        })
        .collect();

    let spatial_weight = (params.compactness / step).powi(2);
    let radius = step;
    let mut iterations_run = 0;

    for _ in 0..params.max_iters {
        iterations_run += 1;

        // Per-pixel argmin over nearby centers; ties go to the lowest center index, so
        // the result is independent of how rows are scheduled.
        labels
            .par_chunks_mut(w)
            .enumerate()
            .for_each(|(y, row)| {
                let yf = y as f64;
                let mut best = vec![f64::INFINITY; w];
                for (k, c) in centers.iter().enumerate() {
                    let dy = yf - c.y;
                    if dy.abs() > radius {
                        continue;
                    }
                    let x0 = (c.x - radius).ceil().max(0.0) as usize;
                    let x1 = ((c.x + radius).floor() as isize).min(w as isize - 1);
                    if x1 < x0 as isize {
                        continue;
                    }
                    for x in x0..=x1 as usize {
                        let dx = x as f64 - c.x;
                        let dv = f64::from(intensity[y * w + x]) - c.v;
                        let d = dv * dv + (dx * dx + dy * dy) * spatial_weight;
                        if d < best[x] {
                            best[x] = d;
                            row[x] = k as u32;
                        }
                    }
                }
            });

        let mut sums = vec![[0u64; 4]; centers.len()];
        for (p, &l) in labels.iter().enumerate() {
            let s = &mut sums[l as usize];
            s[0] += (p % w) as u64;
            s[1] += (p / w) as u64;
            s[2] += u64::from(intensity[p]);
            s[3] += 1;
        }
        let mut max_shift = 0.0f64;
        for (c, s) in centers.iter_mut().zip(&sums) {
            if s[3] == 0 {
                continue;
            }
            let cnt = s[3] as f64;
            let (x, y) = (s[0] as f64 / cnt, s[1] as f64 / cnt);
            max_shift = max_shift.max((x - c.x).hypot(y - c.y));
            *c = Center {
                x,
                y,
                v: s[2] as f64 / cnt,
            };
        }
        if max_shift < CONVERGENCE_PX {
            break;
        }
    }

    enforce_connectivity(w, h, &intensity, &mut labels);
    let count = compact_labels(&mut labels);
    SuperpixelLabeling::new(w, h, labels, count, iterations_run)
}

/// Keeps the largest 4-connected piece of every label and merges the other pieces
/// into the adjacent kept label with the closest mean intensity (lowest label on ties).
fn enforce_connectivity(w: usize, h: usize, intensity: &[u8], labels: &mut [u32]) {
    loop {
        let comps = connected_components(w, h, labels);
        let nlabels = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);

        // Largest component per label; earliest in raster order wins size ties.
        let mut keeper = vec![usize::MAX; nlabels];
        for c in 0..comps.count() {
            let l = labels[comps.first_pixel[c]] as usize;
            if keeper[l] == usize::MAX || comps.sizes[c] > comps.sizes[keeper[l]] {
                keeper[l] = c;
            }
        }
        let orphans: Vec<usize> = (0..comps.count())
            .filter(|&c| keeper[labels[comps.first_pixel[c]] as usize] != c)
            .collect();
        if orphans.is_empty() {
            return;
        }

        let mut label_sum = vec![(0u64, 0u64); nlabels];
        let mut comp_sum = vec![(0u64, 0u64); comps.count()];
        for (p, (&l, &c)) in labels.iter().zip(&comps.ids).enumerate() {
            let v = u64::from(intensity[p]);
            label_sum[l as usize].0 += v;
            label_sum[l as usize].1 += 1;
            comp_sum[c as usize].0 += v;
            comp_sum[c as usize].1 += 1;
        }
        let mean = |(s, n): (u64, u64)| s as f64 / n as f64;

        // Orphans only join kept pieces. Merging two orphans into each other could
        // swap their labels forever; this way every round retires at least one.
        let kept = |c: usize| keeper[labels[comps.first_pixel[c]] as usize] == c;
        let mut neighbours: Vec<Vec<u32>> = vec![Vec::new(); comps.count()];
        for_each_adjacent_pair(w, h, |p, q| {
            let (cp, cq) = (comps.ids[p] as usize, comps.ids[q] as usize);
            if cp != cq {
                if kept(cq) {
                    neighbours[cp].push(labels[q]);
                }
                if kept(cp) {
                    neighbours[cq].push(labels[p]);
                }
            }
        });

        let mut target = vec![u32::MAX; comps.count()];
        for &c in &orphans {
            let own = labels[comps.first_pixel[c]];
            let m = mean(comp_sum[c]);
            target[c] = neighbours[c]
                .iter()
                .copied()
                .filter(|&l| l != own)
                .min_by(|&a, &b| {
                    let da = (mean(label_sum[a as usize]) - m).abs();
                    let db = (mean(label_sum[b as usize]) - m).abs();
                    da.total_cmp(&db).then(a.cmp(&b))
                })
                .unwrap_or(own);
        }
        let mut changed = false;
        for (l, &c) in labels.iter_mut().zip(&comps.ids) {
            let t = target[c as usize];
            if t != u32::MAX && t != *l {
                *l = t;
                changed = true;
            }
        }
        if !changed {
            return;
        }
    }
}

/// Renumbers labels to `0..K` preserving their order; returns `K`.
fn compact_labels(labels: &mut [u32]) -> usize {
    let nlabels = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
    let mut used = vec![false; nlabels];
    for &l in labels.iter() {
        used[l as usize] = true;
    }
    let mut remap = vec![u32::MAX; nlabels];
    let mut next = 0u32;
    for (l, u) in used.iter().enumerate() {
        if *u {
            remap[l] = next;
            next += 1;
        }
    }
    for l in labels.iter_mut() {
        *l = remap[*l as usize];
    }
    next as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ValueSpace;

    #[test]
    fn constant_image_gives_regular_grid() {
        let img = GrayImage::constant(64, 64, 120.0, ValueSpace::Unit8).unwrap();
        let sp = slic(&img, &SlicParams::new(16)).unwrap();
        assert_eq!(sp.count(), 16);
        assert!(sp.is_connected());
        let sizes = sp.sizes();
        let mut cx = [0.0; 16];
        let mut cy = [0.0; 16];
        for (p, &l) in sp.labels().iter().enumerate() {
            cx[l as usize] += (p % 64) as f64;
            cy[l as usize] += (p / 64) as f64;
        }
        let mut found = [false; 16];
        for l in 0..16 {
            let (x, y) = (cx[l] / sizes[l] as f64, cy[l] / sizes[l] as f64);
            // Grid cell centers sit at 7.5, 23.5, 39.5, 55.5.
            let i = ((x - 7.5) / 16.0).round();
            let j = ((y - 7.5) / 16.0).round();
            assert!((x - (7.5 + 16.0 * i)).abs() <= 1.0, "x={x}");
            assert!((y - (7.5 + 16.0 * j)).abs() <= 1.0, "y={y}");
            found[(j * 4.0 + i) as usize] = true;
        }
        assert!(found.iter().all(|&f| f));
    }

    #[test]
    fn one_superpixel_per_pixel() {
        let px: Vec<u8> = (0..36).map(|i| (i * 7) as u8).collect();
        let img = GrayImage::from_u8(6, 6, &px).unwrap();
        let sp = slic(&img, &SlicParams::new(36)).unwrap();
        assert_eq!(sp.count(), 36);
        assert_eq!(sp.iterations_run(), 0);
        assert_eq!(sp.labels(), (0..36).collect::<Vec<u32>>().as_slice());
    }

    #[test]
    fn parameter_errors() {
        let img = GrayImage::constant(4, 4, 0.0, ValueSpace::Unit8).unwrap();
        assert!(slic(&img, &SlicParams::new(17)).is_err());
        assert!(slic(&img, &SlicParams::new(0)).is_err());
        let mut p = SlicParams::new(4);
        p.compactness = 0.0;
        assert!(slic(&img, &p).is_err());
        let hu = GrayImage::constant(4, 4, 0.0, ValueSpace::Hu).unwrap();
        assert!(slic(&hu, &SlicParams::new(4)).is_err());
    }

    #[test]
    fn single_superpixel() {
        let px: Vec<u8> = (0..100).map(|i| (i * 13 % 256) as u8).collect();
        let img = GrayImage::from_u8(10, 10, &px).unwrap();
        let sp = slic(&img, &SlicParams::new(1)).unwrap();
        assert_eq!(sp.count(), 1);
    }

    #[test]
    fn elongated_images() {
        for (w, h, m) in [(39, 4, 3), (4, 39, 3), (100, 1, 7), (1, 100, 1)] {
            let img = GrayImage::constant(w, h, 9.0, ValueSpace::Unit8).unwrap();
            let sp = slic(&img, &SlicParams::new(m)).unwrap();
            assert!(sp.count() <= m && sp.count() >= 1, "{w}x{h} M={m}");
            assert!(sp.is_connected());
        }
    }

    #[test]
    fn orphans_are_merged() {
        // Label 0 split in two pieces; the smaller one (pixel 8) must join a neighbour.
        #[rustfmt::skip]
        let mut labels = vec![
            0, 0, 1,
            0, 1, 1,
            2, 2, 0,
        ];
        let intensity = [10, 10, 200, 10, 200, 200, 50, 50, 190];
        enforce_connectivity(3, 3, &intensity, &mut labels);
        assert_eq!(labels[8], 1);
        let count = compact_labels(&mut labels);
        let sp = SuperpixelLabeling::new(3, 3, labels, count, 0).unwrap();
        assert!(sp.is_connected());
    }

    #[test]
    fn orphan_tie_goes_to_lowest_label() {
        // Label 3 has pieces {2} and {6,7,8}; the orphan {2} only touches label 0.
        #[rustfmt::skip]
        let mut labels = vec![
            1, 0, 3,
            0, 0, 0,
            3, 3, 3,
        ];
        let intensity = [0, 100, 100, 100, 100, 100, 0, 0, 0];
        enforce_connectivity(3, 3, &intensity, &mut labels);
        assert_eq!(labels[2], 0);

        // Orphan {1} of label 1 is equally close to labels 2 and 0.
        #[rustfmt::skip]
        let mut labels = vec![
            2, 1, 0,
            3, 3, 3,
            1, 1, 1,
        ];
        let intensity = [50, 60, 50, 0, 0, 0, 60, 60, 60];
        enforce_connectivity(3, 3, &intensity, &mut labels);
        assert_eq!(labels[1], 0);
    }

    #[test]
    fn scattered_labels_become_connected() {
        use rand::{RngExt, SeedableRng};
        // Many adjacent orphan pieces of different labels.
        let mut rng = rand_xoshiro::SplitMix64::seed_from_u64(3);
        for _ in 0..2000 {
            let mut labels: Vec<u32> = (0..35).map(|_| rng.random_range(0..4)).collect();
            let intensity: Vec<u8> = (0..35).map(|_| rng.random_range(0..4) * 60).collect();
            enforce_connectivity(7, 5, &intensity, &mut labels);
            let count = compact_labels(&mut labels);
            assert!(SuperpixelLabeling::new(7, 5, labels, count, 0).unwrap().is_connected());
        }
    }

    #[test]
    fn labeling_validation() {
        assert!(SuperpixelLabeling::new(2, 1, vec![0, 2], 2, 0).is_err());
        assert!(SuperpixelLabeling::new(2, 1, vec![0, 0], 2, 0).is_err());
        assert!(SuperpixelLabeling::new(2, 1, vec![1, 0], 2, 0).is_ok());
    }
}
