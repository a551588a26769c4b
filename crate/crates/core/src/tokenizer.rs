//! Block vector quantizer: a k-means codebook over flattened supervoxel pixels.
//!
//! Token `i` depends only on the pixels of supervoxel `i`, so a condition
//! region can never leak into tokens whose blocks it does not touch.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::grid::{GridShape, TokenGrid};
use crate::rng::Rng;
use crate::video::{VideoTensor, VoxelMask};

/// `v_vis` centroids of dimension `dim`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    v_vis: usize,
    dim: usize,
    centroids: Vec<f32>,
}

/// Per-iteration trace of a k-means fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub iterations: usize,
    /// Mean squared L2 distance of every supervoxel vector to its centroid,
    /// recorded after each assignment pass.
    pub distortion_per_iter: Vec<f64>,
}

impl Codebook {
    pub fn new(v_vis: usize, dim: usize, centroids: Vec<f32>) -> Result<Self> {
        if v_vis == 0 || dim == 0 {
            return Err(Error::Config(format!(
                "codebook must be non-empty, got {v_vis} x {dim}"
            )));
        }
        if centroids.len() != v_vis * dim {
            return Err(Error::Dimension(format!(
                "{} centroid values for {v_vis} x {dim} codebook",
                centroids.len()
            )));
        }
        if centroids
            .iter()
            .any(|v| !(v.is_finite() && (0.0..=1.0).contains(v)))
        {
            return Err(Error::Numeric("centroid entry outside [0, 1]".into()));
        }
        Ok(Self {
            v_vis,
            dim,
            centroids,
        })
    }

    pub fn v_vis(&self) -> usize {
        self.v_vis
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    pub fn centroid(&self, k: usize) -> &[f32] {
        &self.centroids[k * self.dim..(k + 1) * self.dim]
    }

    /// Nearest centroid by squared L2; ties go to the lowest id.
    pub fn nearest(&self, v: &[f32]) -> u32 {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for k in 0..self.v_vis {
            let d = sq_dist_f32(v, self.centroid(k));
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        best as u32
    }

    /// Channels implied by this codebook for blocks of `shape`.
    pub fn channels_for(&self, shape: &GridShape) -> Result<usize> {
        let bv = shape.block_voxels();
        if !self.dim.is_multiple_of(bv) {
            return Err(Error::Dimension(format!(
                "codebook dimension {} is not a multiple of block volume {bv}",
                self.dim
            )));
        }
        Ok(self.dim / bv)
    }
}

fn sq_dist_f32(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

fn sq_dist_f64(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_video(video: &VideoTensor, shape: &GridShape) -> Result<()> {
    if video.dims() != shape.video_dims() {
        let d = shape.video_dims();
        return Err(Error::Dimension(format!(
            "video {}x{}x{} does not match grid extent {}x{}x{}",
            video.t_frames(),
            video.height(),
            video.width(),
            d.t,
            d.h,
            d.w
        )));
    }
    Ok(())
}

/// Pixel vector of supervoxel `idx`, ordered (t, y, x, c) within the block.
pub fn block_vector(video: &VideoTensor, shape: &GridShape, idx: usize, out: &mut Vec<f32>) {
    out.clear();
    let c = shape.coord_unchecked(idx);
    let (t0, y0, x0) = (
        c.t * shape.block_t,
        c.h * shape.block_h,
        c.w * shape.block_w,
    );
    for t in t0..t0 + shape.block_t {
        for y in y0..y0 + shape.block_h {
            let start = video.offset(t, y, x0);
            let end = start + shape.block_w * video.channels();
            out.extend_from_slice(&video.data()[start..end]);
        }
    }
}

/// All supervoxel vectors of a video, `N x dim` row-major.
pub fn block_vectors(video: &VideoTensor, shape: &GridShape) -> Result<Vec<f32>> {
    check_video(video, shape)?;
    let mut all = Vec::with_capacity(video.data().len());
    let mut buf = Vec::new();
    for idx in 0..shape.len() {
        block_vector(video, shape, idx, &mut buf);
        all.extend_from_slice(&buf);
    }
    Ok(all)
}

/// Lloyd's algorithm with farthest-point initialization over the supervoxel
/// vectors of `videos`.
///
/// Identical vectors are merged into weighted points first, so the first
/// centroid is drawn uniformly from the distinct vectors and each following
/// one is the distinct vector farthest from all chosen so far (ties to the
/// earliest). Iteration stops after `max_iter` assignment passes or when an
/// assignment pass changes nothing. A cluster that empties is reseeded at the
/// point farthest from its own centroid.
pub fn fit_codebook(
    videos: &[VideoTensor],
    shape: &GridShape,
    v_vis: usize,
    max_iter: usize,
    rng: &mut Rng,
) -> Result<(Codebook, FitReport)> {
    if v_vis == 0 {
        return Err(Error::Config("codebook size must be positive".into()));
    }
    if max_iter == 0 {
        return Err(Error::Config("max_iter must be positive".into()));
    }
    let channels = videos
        .first()
        .map(|v| v.channels())
        .ok_or_else(|| Error::Config("no videos to fit the codebook on".into()))?;
    let dim = shape.block_voxels() * channels;

    // distinct vectors in first-appearance order, with multiplicities
    let mut index: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut points: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut buf = Vec::with_capacity(dim);
    for video in videos {
        check_video(video, shape)?;
        if video.channels() != channels {
            return Err(Error::Dimension("videos disagree on channel count".into()));
        }
        for idx in 0..shape.len() {
            block_vector(video, shape, idx, &mut buf);
            let key: Vec<u32> = buf.iter().map(|v| (v + 0.0).to_bits()).collect();
            match index.get(&key) {
                Some(&p) => weights[p] += 1.0,
                None => {
                    index.insert(key, weights.len());
                    points.extend(buf.iter().map(|&v| v as f64));
                    weights.push(1.0);
                }
            }
        }
    }
    let n_points = weights.len();
    if n_points < v_vis {
        return Err(Error::Config(format!(
            "only {n_points} distinct supervoxel vectors for a codebook of {v_vis}"
        )));
    }
    let total_weight: f64 = weights.iter().sum();
    let point = |p: usize| &points[p * dim..(p + 1) * dim];

    let mut centroids = vec![0.0f64; v_vis * dim];
    let first = rng.below(n_points);
    centroids[..dim].copy_from_slice(point(first));
    let mut min_d: Vec<f64> = (0..n_points)
        .map(|p| sq_dist_f64(point(p), point(first)))
        .collect();
    for k in 1..v_vis {
        let mut far = 0;
        for p in 1..n_points {
            if min_d[p] > min_d[far] {
                far = p;
            }
        }
        centroids[k * dim..(k + 1) * dim].copy_from_slice(point(far));
        for (p, md) in min_d.iter_mut().enumerate() {
            let d = sq_dist_f64(point(p), point(far));
            if d < *md {
                *md = d;
            }
        }
    }

    let mut assign = vec![usize::MAX; n_points];
    let mut dist = vec![0.0f64; n_points];
    let mut report = FitReport {
        iterations: 0,
        distortion_per_iter: Vec::new(),
    };
    for _ in 0..max_iter {
        let mut changed = false;
        for p in 0..n_points {
            let x = point(p);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for k in 0..v_vis {
                let d = sq_dist_f64(x, &centroids[k * dim..(k + 1) * dim]);
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            if assign[p] != best {
                assign[p] = best;
                changed = true;
            }
            dist[p] = best_d;
        }
        let distortion = (0..n_points).map(|p| weights[p] * dist[p]).sum::<f64>() / total_weight;
        report.iterations += 1;
        report.distortion_per_iter.push(distortion);
        if !changed {
            break;
        }

        let mut sums = vec![0.0f64; v_vis * dim];
        let mut mass = vec![0.0f64; v_vis];
        for p in 0..n_points {
            let k = assign[p];
            mass[k] += weights[p];
            for (s, &x) in sums[k * dim..(k + 1) * dim].iter_mut().zip(point(p)) {
                *s += weights[p] * x;
            }
        }
        let mut by_distance: Vec<usize> = Vec::new();
        let mut taken = 0;
        for k in 0..v_vis {
            let c = &mut centroids[k * dim..(k + 1) * dim];
            if mass[k] > 0.0 {
                for (c, s) in c.iter_mut().zip(&sums[k * dim..(k + 1) * dim]) {
                    *c = s / mass[k];
                }
            } else {
                if by_distance.is_empty() {
                    by_distance = (0..n_points).collect();
                    by_distance.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
                }
                let p = by_distance[taken];
                taken += 1;
                c.copy_from_slice(point(p));
            }
        }
    }

    let centroids: Vec<f32> = centroids
        .iter()
        .map(|&v| (v as f32).clamp(0.0, 1.0))
        .collect();
    Ok((Codebook::new(v_vis, dim, centroids)?, report))
}

/// Maps every supervoxel to its nearest centroid.
pub fn encode(video: &VideoTensor, codebook: &Codebook, shape: &GridShape) -> Result<TokenGrid> {
    check_video(video, shape)?;
    let dim = shape.block_voxels() * video.channels();
    if dim != codebook.dim() {
        return Err(Error::Dimension(format!(
            "block vectors have dimension {dim}, codebook expects {}",
            codebook.dim()
        )));
    }
    let mut buf = Vec::with_capacity(dim);
    let ids = (0..shape.len())
        .map(|idx| {
            block_vector(video, shape, idx, &mut buf);
            codebook.nearest(&buf)
        })
        .collect();
    TokenGrid::new(*shape, ids, codebook.v_vis())
}

/// Fills each supervoxel with its token's centroid.
pub fn decode(grid: &TokenGrid, codebook: &Codebook, shape: &GridShape) -> Result<VideoTensor> {
    if grid.is_empty() {
        return Err(Error::Dimension("cannot decode an empty token grid".into()));
    }
    if grid.shape() != shape {
        return Err(Error::Dimension("token grid shape does not match".into()));
    }
    if let Some(bad) = grid
        .ids()
        .iter()
        .find(|&&id| id as usize >= codebook.v_vis())
    {
        return Err(Error::Vocabulary(format!(
            "token {bad} outside codebook of size {}",
            codebook.v_vis()
        )));
    }
    let channels = codebook.channels_for(shape)?;
    let mut video = VideoTensor::zeros(shape.video_dims(), channels);
    let row = shape.block_w * channels;
    for (idx, &id) in grid.ids().iter().enumerate() {
        let c = shape.coord_unchecked(idx);
        let centroid = codebook.centroid(id as usize);
        let mut src = 0;
        for t in c.t * shape.block_t..(c.t + 1) * shape.block_t {
            for y in c.h * shape.block_h..(c.h + 1) * shape.block_h {
                let o = video.offset(t, y, c.w * shape.block_w);
                video.data_mut()[o..o + row].copy_from_slice(&centroid[src..src + row]);
                src += row;
            }
        }
    }
    Ok(video)
}

/// Tokens of a padded condition video plus, per token, whether its supervoxel
/// holds no valid voxel at all.
pub fn encode_condition(
    padded: &VideoTensor,
    validity: &VoxelMask,
    codebook: &Codebook,
    shape: &GridShape,
) -> Result<(TokenGrid, Vec<bool>)> {
    if validity.dims() != padded.dims() {
        return Err(Error::Dimension(
            "validity mask does not match the condition video".into(),
        ));
    }
    let tokens = encode(padded, codebook, shape)?;
    Ok((tokens, allpadded(validity, shape)))
}

/// `true` at every token whose supervoxel contains no valid voxel.
pub fn allpadded(validity: &VoxelMask, shape: &GridShape) -> Vec<bool> {
    let mut padded = vec![true; shape.len()];
    let d = validity.dims();
    for t in 0..d.t {
        for y in 0..d.h {
            for x in 0..d.w {
                if validity.get(t, y, x) {
                    padded[shape.token_of_voxel(t, y, x)] = false;
                }
            }
        }
    }
    padded
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::VideoDims;

    fn line_video(values: &[f32]) -> VideoTensor {
        VideoTensor::new(values.len(), 1, 1, 1, values.to_vec()).unwrap()
    }

    fn unit_shape(n: usize) -> GridShape {
        GridShape::new((n, 1, 1), (1, 1, 1)).unwrap()
    }

    /// Minimum k-means objective over every 2-partition of a 1-D point set.
    fn best_two_partition(points: &[f64]) -> (f64, [f64; 2]) {
        let n = points.len();
        let mut best = (f64::INFINITY, [0.0, 0.0]);
        for mask in 1..(1u32 << n) - 1 {
            let (mut a, mut b) = (vec![], vec![]);
            for (i, &p) in points.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    a.push(p)
                } else {
                    b.push(p)
                }
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let (ma, mb) = (mean(&a), mean(&b));
            let sse: f64 = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>()
                + b.iter().map(|x| (x - mb).powi(2)).sum::<f64>();
            let d = sse / n as f64;
            if d < best.0 {
                let mut c = [ma, mb];
                c.sort_by(f64::total_cmp);
                best = (d, c);
            }
        }
        best
    }

    #[test]
    fn two_clusters_match_partition_oracle() {
        let (oracle_d, oracle_c) = best_two_partition(&[0.0, 0.1, 0.8, 0.9]);
        assert!((oracle_d - 0.0025).abs() < 1e-12);
        let video = line_video(&[0.0, 0.1, 0.8, 0.9]);
        for seed in 0..8 {
            let (cb, rep) = fit_codebook(
                std::slice::from_ref(&video),
                &unit_shape(4),
                2,
                50,
                &mut Rng::new(seed),
            )
            .unwrap();
            let mut c = [cb.centroid(0)[0] as f64, cb.centroid(1)[0] as f64];
            c.sort_by(f64::total_cmp);
            assert!((c[0] - oracle_c[0]).abs() < 1e-6 && (c[1] - oracle_c[1]).abs() < 1e-6);
            let last = *rep.distortion_per_iter.last().unwrap();
            assert!((last - oracle_d).abs() < 1e-9, "distortion {last}");
        }
    }

    #[test]
    fn k_equal_to_distinct_gives_zero_distortion() {
        let vals = [0.2, 0.9, 0.2, 0.4, 0.9, 0.0];
        let (cb, rep) = fit_codebook(
            &[line_video(&vals)],
            &unit_shape(6),
            4,
            10,
            &mut Rng::new(3),
        )
        .unwrap();
        assert_eq!(*rep.distortion_per_iter.last().unwrap(), 0.0);
        let mut cs: Vec<f32> = (0..4).map(|k| cb.centroid(k)[0]).collect();
        cs.sort_by(f32::total_cmp);
        assert_eq!(cs, vec![0.0, 0.2, 0.4, 0.9]);
    }

    #[test]
    fn too_few_distinct_vectors_is_config_error() {
        let v = line_video(&[0.5, 0.5, 0.5, 0.1]);
        assert!(matches!(
            fit_codebook(&[v], &unit_shape(4), 3, 10, &mut Rng::new(0)),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            fit_codebook(&[], &unit_shape(4), 3, 10, &mut Rng::new(0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn distortion_is_monotone_and_fit_deterministic() {
        let mut rng = Rng::new(11);
        let shape = GridShape::new((2, 4, 4), (2, 2, 2)).unwrap();
        let videos: Vec<VideoTensor> = (0..3)
            .map(|_| {
                let data = (0..4 * 8 * 8)
                    .map(|_| (rng.uniform() as f32 * 4.0).floor() / 4.0)
                    .collect();
                VideoTensor::new(4, 8, 8, 1, data).unwrap()
            })
            .collect();
        let (a, rep) = fit_codebook(&videos, &shape, 8, 100, &mut Rng::new(5)).unwrap();
        for w in rep.distortion_per_iter.windows(2) {
            assert!(w[1] <= w[0], "{:?}", rep.distortion_per_iter);
        }
        let (b, rep_b) = fit_codebook(&videos, &shape, 8, 100, &mut Rng::new(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(rep, rep_b);
        for i in 0..8 {
            for j in i + 1..8 {
                assert!(sq_dist_f32(a.centroid(i), a.centroid(j)) > 0.0);
            }
        }
    }

    #[test]
    fn encode_recovers_codebook_assembly_and_ties_go_low() {
        let shape = GridShape::new((1, 2, 2), (1, 1, 2)).unwrap();
        let cb = Codebook::new(3, 2, vec![0.0, 0.0, 1.0, 1.0, 0.0, 1.0]).unwrap();
        let ids = vec![2, 0, 1, 2];
        let grid = TokenGrid::new(shape, ids.clone(), 3).unwrap();
        let video = decode(&grid, &cb, &shape).unwrap();
        assert_eq!(encode(&video, &cb, &shape).unwrap().ids(), &ids[..]);

        // 0.5 is exactly equidistant from centroids 3 and 7
        let cb = Codebook::new(8, 1, vec![0.0, 0.05, 0.95, 0.25, 1.0, 0.9, 0.1, 0.75]).unwrap();
        let one = GridShape::new((1, 1, 1), (1, 1, 1)).unwrap();
        let v = VideoTensor::new(1, 1, 1, 1, vec![0.5]).unwrap();
        assert_eq!(encode(&v, &cb, &one).unwrap().ids(), &[3]);
    }

    #[test]
    fn decode_constant_grid_and_errors() {
        let shape = GridShape::new((2, 1, 1), (1, 2, 2)).unwrap();
        let cb = Codebook::new(2, 4, vec![0.1, 0.2, 0.3, 0.4, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let grid = TokenGrid::new(shape, vec![0, 0], 2).unwrap();
        let v = decode(&grid, &cb, &shape).unwrap();
        assert_eq!(v.data(), &[0.1, 0.2, 0.3, 0.4, 0.1, 0.2, 0.3, 0.4]);
        let wide = TokenGrid::new(shape, vec![0, 5], 6).unwrap();
        assert!(matches!(
            decode(&wide, &cb, &shape),
            Err(Error::Vocabulary(_))
        ));
        assert!(GridShape::new((0, 1, 1), (1, 1, 1)).is_err());
    }

    #[test]
    fn encode_rejects_mismatched_video() {
        let shape = GridShape::new((1, 1, 1), (1, 2, 2)).unwrap();
        let cb = Codebook::new(1, 4, vec![0.0; 4]).unwrap();
        let v = VideoTensor::zeros(VideoDims::new(1, 2, 4), 1);
        assert!(matches!(encode(&v, &cb, &shape), Err(Error::Dimension(_))));
        let v = VideoTensor::zeros(VideoDims::new(1, 2, 2), 2);
        assert!(matches!(encode(&v, &cb, &shape), Err(Error::Dimension(_))));
    }

    #[test]
    fn allpadded_follows_validity() {
        let shape = GridShape::new((4, 2, 2), (4, 2, 2)).unwrap();
        let dims = shape.video_dims();
        assert!(allpadded(&VoxelMask::filled(dims, true), &shape)
            .iter()
            .all(|&p| !p));
        assert!(allpadded(&VoxelMask::filled(dims, false), &shape)
            .iter()
            .all(|&p| p));
        // first frame valid, block_t = 4: only t_lat = 0 slab is touched
        let fp = VoxelMask::from_fn(dims, |t, _, _| t < 1);
        let pad = allpadded(&fp, &shape);
        for (idx, &p) in pad.iter().enumerate() {
            assert_eq!(p, shape.unflatten(idx).unwrap().t != 0);
        }
    }
}
