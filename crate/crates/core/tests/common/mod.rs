//! Oracles and generators shared by the integration and acceptance tests.
//! Nothing here calls the code it is used to check.

#![allow(dead_code)]

use idiomkit::dataset::{ClassInfo, Dataset, Example, FoldPlan, Role};
use idiomkit::evaluation::ConfusionMatrix;
use idiomkit::models::layers::LAYER_NORM_EPS;
use idiomkit::models::attention_pool;
use idiomkit::numcore::{lstm_cell, Graph, LstmWeights, Padding, Tensor, Var};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn uniform(r: &mut impl Rng, dims: &[usize]) -> Tensor<f64> {
    let n = dims.iter().product();
    Tensor::new(dims.to_vec(), (0..n).map(|_| r.gen_range(-1.0..=1.0)).collect()).unwrap()
}

type BuildFn = Box<dyn for<'a> Fn(&mut Graph<'a, f64>, &[Var]) -> idiomkit::Result<Var>>;

/// A differentiable function of `leaves` that ends in a scalar.
pub struct GradCase {
    pub leaves: Vec<Tensor<f64>>,
    pub build: BuildFn,
}

/// Reduces any output to a scalar through fixed random weights, so every
/// output element contributes a distinct amount.
fn project(g: &mut Graph<'_, f64>, out: Var, weights: &Tensor<f64>) -> idiomkit::Result<Var> {
    let w = g.constant(weights.clone());
    let p = g.mul(out, w)?;
    Ok(g.sum(p))
}

fn mask(r: &mut impl Rng, len: usize) -> Option<Vec<bool>> {
    if r.gen_bool(0.5) {
        return None;
    }
    let mut m: Vec<bool> = (0..len).map(|_| r.gen_bool(0.7)).collect();
    let keep = r.gen_range(0..len);
    m[keep] = true;
    Some(m)
}

pub const LAYER_TYPES: [&str; 9] = [
    "embedding",
    "linear",
    "lstm_cell",
    "conv1d",
    "max_pool",
    "softmax_attention",
    "layer_norm",
    "cross_entropy",
    "activations",
];

pub fn grad_case(layer: &str, r: &mut StdRng) -> GradCase {
    match layer {
        "embedding" => {
            let (v, e, n) = (dim(r, 2, 6), dim(r, 1, 4), dim(r, 1, 6));
            let ids: Vec<usize> = (0..n).map(|_| r.gen_range(0..v)).collect();
            let proj = uniform(r, &[n, e]);
            GradCase {
                leaves: vec![uniform(r, &[v, e])],
                build: Box::new(move |g, x| {
                    let out = g.gather_rows(x[0], &ids)?;
                    project(g, out, &proj)
                }),
            }
        }
        "linear" => {
            let (n, a, b) = (dim(r, 1, 4), dim(r, 1, 5), dim(r, 1, 5));
            let proj = uniform(r, &[n, b]);
            GradCase {
                leaves: vec![uniform(r, &[n, a]), uniform(r, &[a, b]), uniform(r, &[1, b])],
                build: Box::new(move |g, x| {
                    let out = g.linear(x[0], x[1], x[2])?;
                    project(g, out, &proj)
                }),
            }
        }
        "lstm_cell" => {
            let (din, h) = (dim(r, 1, 4), dim(r, 1, 3));
            let proj = uniform(r, &[1, 2 * h]);
            GradCase {
                leaves: vec![
                    uniform(r, &[1, din]),
                    uniform(r, &[1, h]),
                    uniform(r, &[1, h]),
                    uniform(r, &[din, 4 * h]),
                    uniform(r, &[h, 4 * h]),
                    uniform(r, &[1, 4 * h]),
                ],
                build: Box::new(move |g, x| {
                    let w = LstmWeights { w_ih: x[3], w_hh: x[4], bias: x[5] };
                    let (h1, c1) = lstm_cell(g, x[0], x[1], x[2], &w)?;
                    let out = g.concat_cols(&[h1, c1])?;
                    project(g, out, &proj)
                }),
            }
        }
        "conv1d" => {
            let width = 2 * dim(r, 0, 2) + 1;
            let (len, din, dout) = (dim(r, width, width + 4), dim(r, 1, 3), dim(r, 1, 3));
            let padding = if r.gen_bool(0.5) { Padding::Same } else { Padding::Valid };
            let out_len = if padding == Padding::Same { len } else { len - width + 1 };
            let proj = uniform(r, &[out_len, dout]);
            GradCase {
                leaves: vec![uniform(r, &[len, din]), uniform(r, &[width, din, dout])],
                build: Box::new(move |g, x| {
                    let out = g.conv1d(x[0], x[1], padding)?;
                    project(g, out, &proj)
                }),
            }
        }
        "max_pool" => {
            let (len, n) = (dim(r, 1, 6), dim(r, 1, 4));
            let m = mask(r, len);
            let proj = uniform(r, &[1, n]);
            GradCase {
                leaves: vec![uniform(r, &[len, n])],
                build: Box::new(move |g, x| {
                    let out = g.max_pool_rows(x[0], m.as_deref())?;
                    project(g, out, &proj)
                }),
            }
        }
        "softmax_attention" => {
            let (len, h, a) = (dim(r, 1, 6), dim(r, 1, 4), dim(r, 1, 4));
            let m = mask(r, len);
            let proj = uniform(r, &[1, h]);
            GradCase {
                leaves: vec![uniform(r, &[len, h]), uniform(r, &[h, a]), uniform(r, &[a, 1])],
                build: Box::new(move |g, x| {
                    let out = attention_pool(g, x[0], m.as_deref(), x[1], x[2])?;
                    project(g, out, &proj)
                }),
            }
        }
        "layer_norm" => {
            let (n, k) = (dim(r, 1, 4), dim(r, 2, 6));
            let proj = uniform(r, &[n, k]);
            GradCase {
                leaves: vec![uniform(r, &[n, k]), uniform(r, &[1, k]), uniform(r, &[1, k])],
                build: Box::new(move |g, x| {
                    let out = g.layer_norm(x[0], x[1], x[2], LAYER_NORM_EPS)?;
                    project(g, out, &proj)
                }),
            }
        }
        "cross_entropy" => {
            let (b, c) = (dim(r, 1, 5), dim(r, 2, 6));
            let targets: Vec<usize> = (0..b).map(|_| r.gen_range(0..c)).collect();
            GradCase {
                leaves: vec![uniform(r, &[b, c])],
                build: Box::new(move |g, x| g.cross_entropy(x[0], &targets)),
            }
        }
        "activations" => {
            let (n, k) = (dim(r, 1, 3), dim(r, 1, 4));
            let proj = uniform(r, &[n, 4 * k]);
            GradCase {
                leaves: vec![uniform(r, &[n, k])],
                build: Box::new(move |g, x| {
                    let parts = [g.sigmoid(x[0]), g.tanh(x[0]), g.gelu(x[0]), g.relu(x[0])];
                    let out = g.concat_cols(&parts)?;
                    project(g, out, &proj)
                }),
            }
        }
        other => panic!("unknown layer type {other}"),
    }
}

fn loss_value(case: &GradCase, leaves: &[Tensor<f64>]) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = leaves.iter().map(|t| g.param_ref(t)).collect();
    let loss = (case.build)(&mut g, &vars).unwrap();
    g.value(loss).values()[0]
}

/// Norm-wise relative error between analytic and central-difference
/// gradients over all leaves together.
pub fn grad_check(case: &GradCase) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = case.leaves.iter().map(|t| g.param_ref(t)).collect();
    let loss = (case.build)(&mut g, &vars).unwrap();
    let analytic: Vec<f64> =
        g.backward(loss).unwrap().into_tensors().into_iter().flat_map(Tensor::into_values).collect();

    let mut numeric = Vec::with_capacity(analytic.len());
    let mut leaves = case.leaves.clone();
    for l in 0..leaves.len() {
        for i in 0..leaves[l].numel() {
            let orig = leaves[l].values()[i];
            let h = 1e-5 * orig.abs().max(1.0);
            leaves[l].values_mut()[i] = orig + h;
            let up = loss_value(case, &leaves);
            leaves[l].values_mut()[i] = orig - h;
            let down = loss_value(case, &leaves);
            leaves[l].values_mut()[i] = orig;
            numeric.push((up - down) / (2.0 * h));
        }
    }
    assert_eq!(analytic.len(), numeric.len());
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
    let scale = norm(&analytic).max(norm(&numeric));
    if scale < 1e-8 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

pub fn random_confusion(r: &mut impl Rng, max_classes: usize) -> ConfusionMatrix {
    let c = r.gen_range(1..=max_classes);
    loop {
        let counts: Vec<Vec<u64>> = (0..c)
            .map(|_| {
                (0..c)
                    .map(|_| if r.gen_bool(0.4) { 0 } else { r.gen_range(0..20) })
                    .collect()
            })
            .collect();
        if counts.iter().flatten().sum::<u64>() > 0 {
            return ConfusionMatrix::from_counts(counts).unwrap();
        }
    }
}

/// Support-weighted metrics in percent, recomputed from expanded
/// `(prediction, label)` pairs.
pub fn brute_force_metrics(cm: &ConfusionMatrix) -> [f64; 4] {
    let c = cm.classes();
    let mut pairs = Vec::new();
    for t in 0..c {
        for p in 0..c {
            for _ in 0..cm.get(t, p) {
                pairs.push((p, t));
            }
        }
    }
    let n = pairs.len() as f64;
    let correct = pairs.iter().filter(|(p, t)| p == t).count() as f64;
    let (mut prec, mut rec, mut f1) = (0.0, 0.0, 0.0);
    for class in 0..c {
        let tp = pairs.iter().filter(|&&(p, t)| p == class && t == class).count() as f64;
        let fp = pairs.iter().filter(|&&(p, t)| p == class && t != class).count() as f64;
        let fneg = pairs.iter().filter(|&&(p, t)| p != class && t == class).count() as f64;
        let support = tp + fneg;
        if support == 0.0 {
            continue;
        }
        let p = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
        let rc = tp / support;
        let f = if p + rc == 0.0 { 0.0 } else { 2.0 * p * rc / (p + rc) };
        prec += support * p;
        rec += support * rc;
        f1 += support * f;
    }
    [correct / n * 100.0, prec / n * 100.0, rec / n * 100.0, f1 / n * 100.0]
}

/// A dataset with the given class sizes; class 0 is the non-idiom class.
pub fn dataset_with_counts(counts: &[usize]) -> Dataset {
    let classes: Vec<ClassInfo> = (0..counts.len())
        .map(|c| ClassInfo {
            surface: if c == 0 { String::new() } else { format!("idiom{c}") },
            original_label: c as i64,
        })
        .collect();
    let mut examples = Vec::new();
    for (c, &n) in counts.iter().enumerate() {
        for i in 0..n {
            examples.push(Example {
                label: c,
                text: format!("sentence {c} {i} {}", classes[c].surface),
                idiom_surface: classes[c].surface.clone(),
            });
        }
    }
    Dataset { examples, classes }
}

/// Checks the fold plan invariants directly from the assignments.
pub fn check_plan(plan: &FoldPlan, ds: &Dataset, k: usize) -> Result<(), String> {
    if plan.k != k || plan.assignments.len() != ds.len() {
        return Err("plan shape".into());
    }
    let classes = ds.classes.len();
    let mut in_test = vec![0usize; ds.len()];
    for f in 0..k {
        let mut test = vec![0usize; classes];
        let mut val = vec![0usize; classes];
        let mut rest = vec![0usize; classes];
        for (i, a) in plan.assignments.iter().enumerate() {
            let c = ds.examples[i].label;
            match a.roles[f] {
                Role::Test => {
                    in_test[i] += 1;
                    test[c] += 1;
                }
                Role::Validation => {
                    val[c] += 1;
                    rest[c] += 1;
                }
                Role::Train => rest[c] += 1,
            }
        }
        for c in 0..classes {
            let total = test[c] + rest[c];
            let share = total as f64 / k as f64;
            if (test[c] as f64 - share).abs() > 1.0 {
                return Err(format!("fold {f} class {c}: {} test of {total}", test[c]));
            }
            let inner = rest[c] as f64 * 0.2;
            if (val[c] as f64 - inner).abs() > 1.0 {
                return Err(format!("fold {f} class {c}: {} validation of {}", val[c], rest[c]));
            }
        }
    }
    if let Some(i) = in_test.iter().position(|&n| n != 1) {
        return Err(format!("example {i} is in {} test folds", in_test[i]));
    }
    Ok(())
}

/// Strings mixing Arabic script, Latin, digits, punctuation, whitespace,
/// invisible characters and arbitrary scalar values.
pub fn fuzz_string(r: &mut impl Rng) -> String {
    let len = match r.gen_range(0..10) {
        0 => r.gen_range(200..2000),
        _ => r.gen_range(0..60),
    };
    (0..len)
        .map(|_| match r.gen_range(0..10) {
            0..=3 => char::from_u32(r.gen_range(0x0600..=0x06FF)).unwrap(),
            4 => char::from_u32(r.gen_range(0x20..0x7F)).unwrap(),
            5 => [' ', '\t', '\n', '\u{00A0}', '\u{3000}'][r.gen_range(0..5)],
            6 => ['\u{200C}', '\u{200D}', '\u{200B}', '\u{FEFF}', '\u{0640}'][r.gen_range(0..5)],
            7 => char::from_u32(r.gen_range(0xFB50..=0xFEFC)).unwrap_or('x'),
            _ => loop {
                if let Some(c) = char::from_u32(r.gen_range(0..0x11_0000)) {
                    break c;
                }
            },
        })
        .collect()
}

fn dim(r: &mut impl Rng, lo: usize, hi: usize) -> usize {
    r.gen_range(lo..=hi)
}
