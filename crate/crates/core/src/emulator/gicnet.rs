//! Grid-invariant inverse network: projection, per-channel kernel
//! interpolation onto a fixed lattice, lattice convolutions and a dense head
//! producing a diagonal Gaussian over `z`.

use std::cmp::Ordering;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::conv::{im2col_tape, ConvGeometry};
use super::nw::{nw_tape, KernelFamily};
use crate::engine::{ExpLinearBounds, Mat, Mlp, ParamId, ParamStore, ScalarFn, Tape, Var};
use crate::error::{Error, Result};
use crate::gauss::DiagGaussian;
use crate::pde::{Problem, ProblemKind};

fn d_channels() -> usize {
    20
}
fn d_p_width() -> usize {
    64
}
fn d_p_depth() -> usize {
    2
}
fn d_conv_layers() -> usize {
    2
}
fn d_kernel() -> usize {
    5
}
fn d_stride() -> usize {
    1
}
fn d_head_width() -> usize {
    128
}
fn d_head_depth() -> usize {
    2
}
fn d_ls_min() -> f64 {
    1e-2
}
fn d_ls_max() -> f64 {
    1.0
}

/// `[beta]` section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GicConfig {
    /// Interpolation channels, also the convolution width.
    #[serde(default = "d_channels")]
    pub channels: usize,
    /// Lattice points per dimension; defaults to 20 in 1D and 10 otherwise.
    #[serde(default)]
    pub lattice: Option<usize>,
    #[serde(default = "d_p_width")]
    pub p_width: usize,
    #[serde(default = "d_p_depth")]
    pub p_depth: usize,
    #[serde(default = "d_conv_layers")]
    pub conv_layers: usize,
    #[serde(default = "d_kernel")]
    pub kernel: usize,
    #[serde(default = "d_stride")]
    pub stride: usize,
    #[serde(default = "d_head_width")]
    pub head_width: usize,
    #[serde(default = "d_head_depth")]
    pub head_depth: usize,
    #[serde(default)]
    pub kernel_family: KernelFamily,
    #[serde(default = "d_ls_min")]
    pub ls_min: f64,
    #[serde(default = "d_ls_max")]
    pub ls_max: f64,
    #[serde(default)]
    pub sigma_bounds: ExpLinearBounds,
}

impl Default for GicConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub geom: ConvGeometry,
    pub w: ParamId,
    pub b: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GicNet {
    pub p: Mlp,
    pub log_ls: ParamId,
    pub convs: Vec<ConvLayer>,
    pub head: Mlp,
    pub lattice_shape: Vec<usize>,
    pub lattice: Mat,
    pub kernel: KernelFamily,
    pub sigma_bounds: ExpLinearBounds,
    pub n_fields: usize,
    pub n_z: usize,
    pub n_w: usize,
}

/// Evenly spaced lattice over the closed box, row-major.
pub fn build_lattice(lo: &[f64], hi: &[f64], per_dim: usize) -> Mat {
    let d = lo.len();
    let m = per_dim.pow(d as u32);
    let coord = |k: usize, i: usize| {
        if per_dim == 1 {
            0.5 * (lo[k] + hi[k])
        } else {
            lo[k] + (hi[k] - lo[k]) * i as f64 / (per_dim - 1) as f64
        }
    };
    Array2::from_shape_fn((m, d), |(s, k)| {
        let i = (s / per_dim.pow((d - 1 - k) as u32)) % per_dim;
        coord(k, i)
    })
}

/// Row order sorting points (then values) lexicographically.
pub fn canonical_order(points: &Mat, values: &Mat) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.nrows()).collect();
    idx.sort_by(|&a, &b| {
        let key = |i: usize| points.row(i).into_iter().chain(values.row(i)).copied();
        key(a)
            .zip(key(b))
            .map(|(x, y)| x.total_cmp(&y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
    idx
}

/// Lattice axes of convolution layer `layer`.
fn conv_axes(dim: usize, layer: usize) -> Vec<usize> {
    match dim {
        1 => vec![0],
        2 => vec![0, 1],
        // space slabs, then time, alternating
        _ if layer.is_multiple_of(2) => vec![0, 1],
        _ => vec![2],
    }
}

impl GicNet {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        problem: &Problem,
        cfg: &GicConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let dim = problem.dim();
        let per_dim = cfg.lattice.unwrap_or(if dim == 1 { 20 } else { 10 });
        if cfg.channels == 0 || per_dim == 0 || cfg.kernel.is_multiple_of(2) || cfg.stride == 0 {
            return Err(Error::Config(
                "beta: channels, lattice and stride must be positive; kernel must be odd".into(),
            ));
        }
        if !(cfg.ls_min > 0.0 && cfg.ls_max >= cfg.ls_min) {
            return Err(Error::Config("beta: invalid lengthscale range".into()));
        }
        if ExpLinearBounds::new(cfg.sigma_bounds.lo, cfg.sigma_bounds.hi).is_none() {
            return Err(Error::Config("beta: invalid sigma bounds".into()));
        }
        let c = cfg.channels;
        let n_fields = problem.n_fields();
        let mut p_widths = vec![n_fields + dim];
        p_widths.extend(std::iter::repeat_n(cfg.p_width, cfg.p_depth));
        p_widths.push(c);
        let p = Mlp::new(store, "beta.p", &p_widths, rng);

        // lengthscales log-spaced over [ls_min, ls_max]
        let log_ls = Array2::from_shape_fn((1, c), |(_, k)| {
            let t = if c == 1 { 0.0 } else { k as f64 / (c - 1) as f64 };
            cfg.ls_min.ln() + t * (cfg.ls_max.ln() - cfg.ls_min.ln())
        });
        let log_ls = store.add("beta.log_ls", log_ls);

        let mut shape = vec![per_dim; dim];
        let mut convs = Vec::with_capacity(cfg.conv_layers);
        for layer in 0..cfg.conv_layers {
            let geom = ConvGeometry {
                in_shape: shape.clone(),
                axes: conv_axes(dim, layer),
                kernel: cfg.kernel,
                stride: cfg.stride,
            };
            let fan_in = geom.taps() * c;
            let w = store.add_uniform(
                format!("beta.conv.{layer}.w"),
                c,
                fan_in,
                (3.0 / fan_in as f64).sqrt(),
                rng,
            );
            let b = store.add(format!("beta.conv.{layer}.b"), Array2::zeros((1, c)));
            shape = geom.out_shape();
            convs.push(ConvLayer { geom, w, b });
        }
        let flat = shape.iter().product::<usize>() * c;
        let mut head_widths = vec![flat + problem.n_w()];
        head_widths.extend(std::iter::repeat_n(cfg.head_width, cfg.head_depth));
        head_widths.push(2 * problem.n_z());
        let head = Mlp::new(store, "beta.head", &head_widths, rng);

        Ok(Self {
            p,
            log_ls,
            convs,
            head,
            lattice_shape: vec![per_dim; dim],
            lattice: build_lattice(&problem.domain.lo, &problem.domain.hi, per_dim),
            kernel: cfg.kernel_family,
            sigma_bounds: cfg.sigma_bounds,
            n_fields,
            n_z: problem.n_z(),
            n_w: problem.n_w(),
        })
    }

    /// Default configuration sized for `kind`.
    pub fn default_config(kind: ProblemKind) -> GicConfig {
        let mut cfg = GicConfig::default();
        if kind == ProblemKind::NsLid {
            cfg.channels = 30;
        }
        cfg
    }

    /// Records the network on the tape. `values` is `n x n_fields`, row-aligned
    /// with `points`. Returns `(mean, variance)`, each `1 x n_z`.
    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        values: Var,
        points: &Mat,
        w: &[f64],
    ) -> Result<(Var, Var)> {
        let (n, f) = tape.shape(values);
        if f != self.n_fields || points.nrows() != n || points.ncols() != self.lattice.ncols() {
            return Err(Error::Shape("inverse network input".into()));
        }
        if w.len() != self.n_w {
            return Err(Error::Shape(format!("w has {} entries, expected {}", w.len(), self.n_w)));
        }
        let order = canonical_order(points, tape.value(values));
        let sorted_pts = points.select(ndarray::Axis(0), &order);
        let values = tape.gather_rows(values, order);
        let pts = tape.constant(sorted_pts.clone());
        let p_in = tape.concat_cols(&[values, pts]);
        let feats = self.p.forward(tape, store, p_in);
        let log_ls = tape.param(store, self.log_ls);
        let mut h = nw_tape(tape, self.kernel, feats, &sorted_pts, &self.lattice, log_ls);
        for layer in &self.convs {
            let cols = im2col_tape(tape, h, &layer.geom);
            let wv = tape.param(store, layer.w);
            let bv = tape.param(store, layer.b);
            let z = tape.matmul_t(cols, wv);
            let z = tape.add_row(z, bv);
            h = tape.map(z, ScalarFn::Swish, 0);
        }
        let (sites, ch) = tape.shape(h);
        let flat = tape.reshape(h, 1, sites * ch);
        let head_in = if self.n_w > 0 {
            let wv = tape.constant(Array2::from_shape_vec((1, self.n_w), w.to_vec()).expect("row"));
            tape.concat_cols(&[flat, wv])
        } else {
            flat
        };
        let out = self.head.forward(tape, store, head_in);
        let mean = tape.slice_cols(out, 0, self.n_z);
        let raw = tape.slice_cols(out, self.n_z, 2 * self.n_z);
        let var = tape.map(raw, ScalarFn::SigmaT(self.sigma_bounds), 0);
        Ok((mean, var))
    }

    /// Posterior over `z` for field `values` observed at `points`.
    pub fn predict(
        &self,
        store: &ParamStore,
        values: &Mat,
        points: &Mat,
        w: &[f64],
    ) -> Result<DiagGaussian> {
        let mut tape = Tape::new();
        let v = tape.constant(values.clone());
        let (mean, var) = self.forward_tape(&mut tape, store, v, points, w)?;
        DiagGaussian::new(
            Array1::from(tape.value(mean).row(0).to_vec()),
            Array1::from(tape.value(var).row(0).to_vec()),
        )
    }
}

/// `log N(z; mean, diag(var))` on the tape; `mean` and `var` are `1 x k`.
pub fn diag_logpdf_tape(tape: &mut Tape, z: &[f64], mean: Var, var: Var) -> Var {
    let k = z.len();
    let zc = tape.constant(Array2::from_shape_vec((1, k), z.to_vec()).expect("row"));
    let diff = tape.sub(zc, mean);
    let sq = tape.square(diff);
    let inv = tape.map(var, ScalarFn::Recip, 0);
    let quad = tape.mul(sq, inv);
    let logv = tape.map(var, ScalarFn::Log, 0);
    let both = tape.add(quad, logv);
    let s = tape.sum(both);
    let s = tape.scale(s, -0.5);
    tape.offset_scalar(s, -0.5 * k as f64 * (2.0 * std::f64::consts::PI).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lattice_is_row_major_linspace() {
        let l = build_lattice(&[0.0, -1.0], &[1.0, 1.0], 3);
        assert_eq!(l.nrows(), 9);
        assert_eq!(l.row(0).to_vec(), vec![0.0, -1.0]);
        assert_eq!(l.row(1).to_vec(), vec![0.0, 0.0]);
        assert_eq!(l.row(3).to_vec(), vec![0.5, -1.0]);
        assert_eq!(l.row(8).to_vec(), vec![1.0, 1.0]);
    }

    #[test]
    fn poisson_lattice_tensor_shape() {
        let p = Problem::of_kind(ProblemKind::Poisson1d);
        let mut store = ParamStore::new();
        let net = GicNet::new(&mut store, &p, &GicConfig::default(), &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        let points = ndarray::array![[0.1], [-0.4], [0.7]];
        let mut tape = Tape::new();
        let v = tape.constant(ndarray::array![[0.2], [0.5], [-0.1]]);
        let order = canonical_order(&points, tape.value(v));
        let sp = points.select(ndarray::Axis(0), &order);
        let vs = tape.gather_rows(v, order);
        let pts = tape.constant(sp.clone());
        let p_in = tape.concat_cols(&[vs, pts]);
        let feats = net.p.forward(&mut tape, &store, p_in);
        let ls = tape.param(&store, net.log_ls);
        let grid = nw_tape(&mut tape, net.kernel, feats, &sp, &net.lattice, ls);
        // 20 lattice sites by 20 channels
        assert_eq!(tape.shape(grid), (20, 20));
        let ls = store.get(net.log_ls);
        assert!((ls[[0, 0]].exp() - 1e-2).abs() < 1e-15);
        assert!((ls[[0, 19]].exp() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exact_permutation_invariance() {
        for kind in [ProblemKind::Poisson1d, ProblemKind::Burgers, ProblemKind::NsLid] {
            let p = Problem::of_kind(kind);
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let mut store = ParamStore::new();
            let cfg = GicConfig { p_width: 8, head_width: 16, ..GicNet::default_config(kind) };
            let net = GicNet::new(&mut store, &p, &cfg, &mut rng).unwrap();
            let grid = crate::domain::sample_grid(&p.domain, 25, p.grid, &mut rng).unwrap();
            let vals = Array2::from_shape_fn((25, p.n_fields()), |(i, f)| (i as f64 + f as f64).sin());
            let w = p.sample_w(&mut rng);
            let a = net.predict(&store, &vals, &grid.points, &w).unwrap();
            let perm: Vec<usize> = (0..25).rev().collect();
            let b = net
                .predict(
                    &store,
                    &vals.select(ndarray::Axis(0), &perm),
                    &grid.points.select(ndarray::Axis(0), &perm),
                    &w,
                )
                .unwrap();
            assert_eq!(a, b);
            assert!(a.var.iter().all(|&v| v > 1e-5 && v < 1.0));
        }
    }

    #[test]
    fn gradients_reach_every_parameter() {
        let p = Problem::of_kind(ProblemKind::Burgers);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let cfg = GicConfig { channels: 4, p_width: 8, head_width: 8, ..GicConfig::default() };
        let net = GicNet::new(&mut store, &p, &cfg, &mut rng).unwrap();
        let grid = crate::domain::sample_grid(&p.domain, 12, p.grid, &mut rng).unwrap();
        let mut tape = Tape::new();
        let v = tape.constant(Array2::from_shape_fn((12, 1), |(i, _)| (i as f64 * 0.7).cos()));
        let (m, var) = net.forward_tape(&mut tape, &store, v, &grid.points, &[1.0]).unwrap();
        let lp = diag_logpdf_tape(&mut tape, &[0.05, 0.7], m, var);
        let adj = tape.backward(lp);
        let g = tape.param_grads(&adj, &store);
        for (name, t) in store.names().iter().zip(g.tensors()) {
            if name.ends_with(".b") && name.starts_with("beta.conv") {
                continue;
            }
            assert!(t.iter().any(|&x| x != 0.0), "{name}");
        }
    }

    #[test]
    fn diag_logpdf_matches_closed_form() {
        let mut tape = Tape::new();
        let m = tape.constant(ndarray::array![[0.1, -0.3]]);
        let v = tape.constant(ndarray::array![[0.5, 0.02]]);
        let lp = diag_logpdf_tape(&mut tape, &[0.2, -0.25], m, v);
        let g = DiagGaussian::new(ndarray::array![0.1, -0.3], ndarray::array![0.5, 0.02]).unwrap();
        let want = g.logpdf(ndarray::array![0.2, -0.25].view()).unwrap();
        assert!((tape.scalar(lp) - want).abs() < 1e-13);
    }
}
