//! Per-op gradient cases: every tape op against central finite differences
//! in f64, each on a small random problem.

use std::rc::Rc;

use edno_core::autodiff::{grad_check, GradCheckReport, Tape, Value, Var};
use edno_core::tensor::{BlockMap, ComplexGrid, Gather4, RealGrid, Tensor};
use edno_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-4;
pub const TOL: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor(r: &mut ChaCha8Rng, dims: &[usize]) -> Tensor<f64> {
    let n = dims.iter().product();
    Tensor::from_vec(dims, (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn rand_grid(r: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> RealGrid<f64> {
    RealGrid::from_fn(h, w, c, |_, _, _| r.gen_range(-1.0..1.0))
}

pub fn rand_complex(r: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> ComplexGrid<f64> {
    let mut z = ComplexGrid::zeros(h, w, c);
    z.re.iter_mut().for_each(|v| *v = r.gen_range(-1.0..1.0));
    z.im.iter_mut().for_each(|v| *v = r.gen_range(-1.0..1.0));
    z
}

/// Random probe of the same kind as `v`, so the loss weighs every output.
pub fn probe_for(v: &Value<f64>, seed: u64) -> Value<f64> {
    let mut r = rng(seed);
    match v {
        Value::Real(g) => Value::Real(rand_grid(&mut r, g.height(), g.width(), g.channels())),
        Value::Complex(g) => Value::Complex(rand_complex(&mut r, g.height, g.width, g.channels)),
        Value::Tensor(t) => Value::Tensor(rand_tensor(&mut r, t.dims())),
    }
}

pub fn grid_param(t: &mut Tape<f64>, p: &BlockMap<f64>, key: &str, h: usize, w: usize, c: usize) -> Result<Var> {
    let v = t.param(p, key)?;
    t.as_grid(v, h, w, c)
}

fn check<F>(params: BlockMap<f64>, build: F) -> GradCheckReport
where
    F: Fn(&mut Tape<f64>, &BlockMap<f64>) -> Result<Var>,
{
    let f = |p: &BlockMap<f64>| {
        let mut t = Tape::new();
        let out = build(&mut t, p)?;
        let probe = probe_for(t.value(out), 99);
        let loss = t.dot(out, probe)?;
        Ok((t, loss))
    };
    let report = grad_check(f, &params, STEP, TOL, usize::MAX).unwrap();
    for b in &report.blocks {
        assert!(b.checked > 0, "{}: nothing checked", b.key);
    }
    report
}

pub fn store(entries: Vec<(&str, Tensor<f64>)>) -> BlockMap<f64> {
    let mut p = BlockMap::new();
    for (k, t) in entries {
        p.insert(k, t).unwrap();
    }
    p
}

fn conv1x1_grad() -> Vec<GradCheckReport> {
    let mut reports = Vec::new();
    let mut r = rng(1);
    let p = store(vec![
        ("x", rand_tensor(&mut r, &[3, 4, 3])),
        ("w", rand_tensor(&mut r, &[2, 3])),
        ("b", rand_tensor(&mut r, &[2])),
    ]);
    reports.push(check(p, |t, p| {
        let x = grid_param(t, p, "x", 3, 4, 3)?;
        let w = t.param(p, "w")?;
        let b = t.param(p, "b")?;
        t.conv1x1(x, w, b)
    }));
    reports
}

fn conv3x3_grad() -> Vec<GradCheckReport> {
    let mut reports = Vec::new();
    let mut r = rng(2);
    let p = store(vec![
        ("x", rand_tensor(&mut r, &[4, 3, 2])),
        ("w", rand_tensor(&mut r, &[3, 2, 3, 3])),
        ("b", rand_tensor(&mut r, &[3])),
    ]);
    reports.push(check(p, |t, p| {
        let x = grid_param(t, p, "x", 4, 3, 2)?;
        let w = t.param(p, "w")?;
        let b = t.param(p, "b")?;
        t.conv3x3(x, w, b)
    }));
    reports
}

fn depthwise_grad() -> Vec<GradCheckReport> {
    let mut reports = Vec::new();
    let mut r = rng(3);
    let p = store(vec![
        ("x", rand_tensor(&mut r, &[3, 5, 2])),
        ("k", rand_tensor(&mut r, &[2, 3, 3])),
    ]);
    reports.push(check(p, |t, p| {
        let x = grid_param(t, p, "x", 3, 5, 2)?;
        let k = t.param(p, "k")?;
        t.depthwise3x3(x, k)
    }));
    reports
}

fn instance_norm_grad() -> Vec<GradCheckReport> {
    let mut reports = Vec::new();
    let mut r = rng(4);
    let p = store(vec![("x", rand_tensor(&mut r, &[4, 4, 3]))]);
    reports.push(check(p, |t, p| {
        let x = grid_param(t, p, "x", 4, 4, 3)?;
        t.instance_norm(x, 1e-5)
    }));
    reports
}

fn activations_grad() -> Vec<GradCheckReport> {
    let mut reports = Vec::new();
    let mut r = rng(5);
    let p = store(vec![("x", rand_tensor(&mut r, &[3, 3, 2]))]);
    reports.push(check(p.clone(), |t, p| {
        let x = grid_param(t, p, "x", 3, 3, 2)?;
        t.relu(x)
    }));
    reports.push(check(p.clone(), |t, p| {
        let x = grid_param(t, p, "x", 3, 3, 2)?;
        t.sigmoid(x)
    }));
    reports.push(check(p, |t, p| {
        let x = grid_param(t, p, "x", 3, 3, 2)?;
        t.affine(x, 2.5, -0.3)
    }));
    reports
}

fn structural_ops_grad() -> Vec<GradCheckReport> {
    let mut reports = Vec::new();
    let mut r = rng(6);
    let c = rand_grid(&mut r, 3, 3, 2);
    let p = store(vec![
        ("a", rand_tensor(&mut r, &[3, 3, 2])),
        ("b", rand_tensor(&mut r, &[3, 3, 1])),
    ]);
    reports.push(check(p.clone(), |t, p| {
        let a = grid_param(t, p, "a", 3, 3, 2)?;
        let b = grid_param(t, p, "b", 3, 3, 1)?;
        let cat = t.concat(&[b, a, b])?;
        let s = t.add_const(cat, &RealGrid::filled(3, 3, 4, 0.25))?;
        let d = t.add(s, s)?;
        t.mean(d)
    }));
    reports.push(check(p, move |t, p| {
        let a = grid_param(t, p, "a", 3, 3, 2)?;
        let d = t.add_const(a, &c)?;
        let m = t.abs_mean(d)?;
        t.scale(m, -3.0)
    }));
    reports
}

fn gather_grad() -> Vec<GradCheckReport> {
    let mut reports = Vec::new();
    let mut r = rng(7);
    let plan = Rc::new(Gather4::resize(3, 4, 7, 6));
    let p = store(vec![("x", rand_tensor(&mut r, &[3, 4, 2]))]);
    reports.push(check(p, move |t, p| {
        let x = grid_param(t, p, "x", 3, 4, 2)?;
        t.gather(x, plan.clone())
    }));
    reports
}

fn fourier_grad() -> Vec<GradCheckReport> {
    let mut reports = Vec::new();
    let mut r = rng(8);
    let p = store(vec![("x", rand_tensor(&mut r, &[4, 6, 2]))]);
    reports.push(check(p.clone(), |t, p| {
        let x = grid_param(t, p, "x", 4, 6, 2)?;
        t.fft2(x)
    }));
    // ifft2 on a complex input built from two real grids
    let p2 = store(vec![
        ("m", Tensor::from_vec(&[4, 5, 2], (0..40).map(|_| r.gen_range(0.2..1.5)).collect()).unwrap()),
        ("ph", rand_tensor(&mut r, &[4, 5, 2])),
    ]);
    reports.push(check(p2, |t, p| {
        let m = grid_param(t, p, "m", 4, 5, 2)?;
        let ph = grid_param(t, p, "ph", 4, 5, 2)?;
        let z = t.from_polar(m, ph)?;
        t.ifft2(z)
    }));
    reports
}

fn polar_grad() -> Vec<GradCheckReport> {
    let mut reports = Vec::new();
    let mut r = rng(9);
    let p = store(vec![("x", rand_tensor(&mut r, &[4, 4, 2]))]);
    reports.push(check(p.clone(), |t, p| {
        let x = grid_param(t, p, "x", 4, 4, 2)?;
        let f = t.fft2(x)?;
        t.magnitude(f)
    }));
    reports.push(check(p, |t, p| {
        let x = grid_param(t, p, "x", 4, 4, 2)?;
        let f = t.fft2(x)?;
        t.phase(f)
    }));
    reports
}

fn complex_conv_grad() -> Vec<GradCheckReport> {
    let mut reports = Vec::new();
    let mut r = rng(10);
    let target = rand_complex(&mut r, 4, 4, 2);
    let p = store(vec![
        ("x", rand_tensor(&mut r, &[4, 4, 3])),
        ("wr", rand_tensor(&mut r, &[2, 3])),
        ("wi", rand_tensor(&mut r, &[2, 3])),
    ]);
    reports.push(check(p, move |t, p| {
        let x = grid_param(t, p, "x", 4, 4, 3)?;
        let f = t.fft2(x)?;
        let wr = t.param(p, "wr")?;
        let wi = t.param(p, "wi")?;
        let y = t.complex_conv1x1(f, wr, wi)?;
        t.sub_const_complex(y, &target)
    }));
    reports
}

/// Named cases; each yields one report per checked op composition.
pub const CASES: &[(&str, fn() -> Vec<GradCheckReport>)] = &[
    ("conv1x1", conv1x1_grad),
    ("conv3x3", conv3x3_grad),
    ("depthwise", depthwise_grad),
    ("instance_norm", instance_norm_grad),
    ("activations", activations_grad),
    ("structural_ops", structural_ops_grad),
    ("gather", gather_grad),
    ("fourier", fourier_grad),
    ("polar", polar_grad),
    ("complex_conv", complex_conv_grad),
];
