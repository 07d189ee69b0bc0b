use std::fs;

use attrank::autodiff::{gradcheck, GradCheckConfig, Graph, Tensor, ValueId, Var};
use attrank::nn::{parse_layers, FeatureExtractorSpec, RankModel};
use attrank::ranking::{pair_loss_graph, PosteriorConfig, TargetProbability};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{resolve, Resolved};
use crate::{CliError, GradcheckArgs};

const KEYS: &[&str] = &[
    "out",
    "arch",
    "image_size",
    "channels",
    "seed",
    "tolerance",
    "step",
    "samples_per_param",
];

/// Instantiations per primitive; the acceptance suite runs the exhaustive
/// version, this command is the quick field check.
const RUNS_PER_PRIMITIVE: usize = 5;

fn random_var(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Var {
    let numel: usize = shape.iter().product();
    let data: Vec<f64> = (0..numel).map(|_| rng.random_range(lo..hi)).collect();
    Var::param(Tensor::new(shape, data).unwrap())
}

/// Scalarizes through fixed random weights so every element of the output
/// carries a distinct gradient.
fn reduce_with_seed(g: &mut Graph, y: ValueId, seed: u64) -> ValueId {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = g.value(y).numel();
    let flat = g.reshape(y, &[1, n]).unwrap();
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let wv = g.constant(Tensor::new(&[n, 1], w).unwrap());
    let prod = g.matmul(flat, wv).unwrap();
    g.reshape(prod, &[1]).unwrap()
}

pub fn run(args: GradcheckArgs) -> Result<(), CliError> {
    let file = super::file_overlay(&args.config, "gradcheck", KEYS)?;
    let seed = resolve(args.seed, &file, "seed", 0u64)?;
    let tolerance = resolve(args.tolerance, &file, "tolerance", 1e-4)?;
    let step = resolve(args.step, &file, "step", 1e-5)?;
    let samples = resolve(args.samples_per_param, &file, "samples_per_param", 64usize)?;
    let image_size = resolve(args.image_size, &file, "image_size", 32usize)?;
    let channels = resolve(args.channels, &file, "channels", 1usize)?;
    let default_arch = FeatureExtractorSpec::default_32x32().layers_to_string();
    let arch_text = resolve(args.arch, &file, "arch", default_arch)?;
    let layers = parse_layers(&arch_text)?;
    let spec = FeatureExtractorSpec { input: (channels, image_size, image_size), layers };
    spec.validate()?;

    let cfg = GradCheckConfig { step, tolerance, max_elements_per_param: None, sample_seed: seed };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lines: Vec<String> = Vec::new();
    let mut worst = 0.0f64;
    let mut failed = false;

    type OneRun<'a> = Box<dyn Fn(&mut ChaCha8Rng, &GradCheckConfig) -> f64 + 'a>;
    let unary = |shape: &'static [usize], lo: f64, hi: f64, op: fn(&mut Graph, ValueId) -> ValueId| -> OneRun<'static> {
        Box::new(move |rng, cfg| {
            let x = random_var(shape, lo, hi, rng);
            let rseed: u64 = rng.random();
            let params = vec![("x".to_string(), x.clone())];
            gradcheck(
                &params,
                |g| {
                    let xv = g.leaf(&x);
                    let y = op(g, xv);
                    Ok(reduce_with_seed(g, y, rseed))
                },
                cfg,
            )
            .expect("gradcheck runs")
            .max_rel_error()
        })
    };
    let binary = |op: fn(&mut Graph, ValueId, ValueId) -> ValueId| -> OneRun<'static> {
        Box::new(move |rng, cfg| {
            let a = random_var(&[2, 3], -1.0, 1.0, rng);
            let b = random_var(&[2, 3], -1.0, 1.0, rng);
            let rseed: u64 = rng.random();
            let params = vec![("a".to_string(), a.clone()), ("b".to_string(), b.clone())];
            gradcheck(
                &params,
                |g| {
                    let av = g.leaf(&a);
                    let bv = g.leaf(&b);
                    let y = op(g, av, bv);
                    Ok(reduce_with_seed(g, y, rseed))
                },
                cfg,
            )
            .expect("gradcheck runs")
            .max_rel_error()
        })
    };

    let primitives: Vec<(&str, OneRun)> = vec![
        ("matmul", binary(|g, a, b| {
            let at = g.reshape(a, &[2, 3]).unwrap();
            let bt = g.reshape(b, &[3, 2]).unwrap();
            g.matmul(at, bt).unwrap()
        })),
        ("conv2d", Box::new(|rng, cfg| {
            let x = random_var(&[2, 6, 6], -1.0, 1.0, rng);
            let k = random_var(&[2, 2, 3, 3], -1.0, 1.0, rng);
            let rseed: u64 = rng.random();
            let params = vec![("x".to_string(), x.clone()), ("k".to_string(), k.clone())];
            gradcheck(
                &params,
                |g| {
                    let xv = g.leaf(&x);
                    let kv = g.leaf(&k);
                    let y = g.conv2d(xv, kv, 1, 1)?;
                    Ok(reduce_with_seed(g, y, rseed))
                },
                cfg,
            )
            .expect("gradcheck runs")
            .max_rel_error()
        })),
        ("channel_bias", Box::new(|rng, cfg| {
            let x = random_var(&[3, 4, 4], -1.0, 1.0, rng);
            let b = random_var(&[3], -1.0, 1.0, rng);
            let rseed: u64 = rng.random();
            let params = vec![("x".to_string(), x.clone()), ("b".to_string(), b.clone())];
            gradcheck(
                &params,
                |g| {
                    let xv = g.leaf(&x);
                    let bv = g.leaf(&b);
                    let y = g.channel_bias(xv, bv)?;
                    Ok(reduce_with_seed(g, y, rseed))
                },
                cfg,
            )
            .expect("gradcheck runs")
            .max_rel_error()
        })),
        ("maxpool2d", unary(&[2, 6, 6], -1.0, 1.0, |g, x| g.maxpool2d(x, 2, 2).unwrap())),
        ("reshape", unary(&[2, 6], -1.0, 1.0, |g, x| g.reshape(x, &[3, 4]).unwrap())),
        ("relu", unary(&[12], -1.0, 1.0, |g, x| g.relu(x))),
        ("sigmoid", unary(&[12], -4.0, 4.0, |g, x| g.sigmoid(x))),
        ("add", binary(|g, a, b| g.add(a, b).unwrap())),
        ("sub", binary(|g, a, b| g.sub(a, b).unwrap())),
        ("mul", binary(|g, a, b| g.mul(a, b).unwrap())),
        ("scale", unary(&[9], -2.0, 2.0, |g, x| g.scale(x, -1.7))),
        ("log", unary(&[9], 0.4, 2.0, |g, x| g.log(x).unwrap())),
        ("exp", unary(&[9], -2.0, 2.0, |g, x| g.exp(x))),
        ("clip", unary(&[16], 0.0, 1.0, |g, x| g.clip(x, 0.2, 0.8).unwrap())),
    ];

    for (name, one_run) in &primitives {
        let mut max_err = 0.0f64;
        for _ in 0..RUNS_PER_PRIMITIVE {
            max_err = max_err.max(one_run(&mut rng, &cfg));
        }
        let ok = max_err < tolerance;
        failed |= !ok;
        worst = worst.max(max_err);
        lines.push(format!("{name:<14} max rel err {max_err:.3e}  {}", if ok { "ok" } else { "FAIL" }));
    }

    // Full pair-loss graph over the requested architecture, with per-tensor
    // element subsampling so large extractors stay fast.
    let sampled_cfg = GradCheckConfig { max_elements_per_param: Some(samples), ..cfg };
    let model = RankModel::init(&spec, seed.wrapping_add(1))?;
    let img_i = Tensor::new(
        &[channels, image_size, image_size],
        (0..channels * image_size * image_size).map(|_| rng.random_range(0.0..1.0)).collect(),
    )?;
    let img_j = Tensor::new(
        &[channels, image_size, image_size],
        (0..channels * image_size * image_size).map(|_| rng.random_range(0.0..1.0)).collect(),
    )?;
    let clip = PosteriorConfig::default();
    let params: Vec<(String, Var)> = model
        .parameters()
        .into_iter()
        .enumerate()
        .map(|(i, p)| (format!("param{i}"), p))
        .collect();
    let report = gradcheck(
        &params,
        |g| {
            let bound = model.bind(g);
            let a = g.constant(img_i.clone());
            let b = g.constant(img_j.clone());
            pair_loss_graph(g, &bound, a, b, TargetProbability::FIRST_OUTRANKS, &clip)
        },
        &sampled_cfg,
    )?;
    for p in &report.params {
        lines.push(format!(
            "pair_loss {:<10} max rel err {:.3e} over {} elements  {}",
            p.name,
            p.max_rel_error,
            p.checked_elements,
            if p.max_rel_error < tolerance { "ok" } else { "FAIL" }
        ));
    }
    failed |= !report.passed();
    worst = worst.max(report.max_rel_error());

    for line in &lines {
        println!("{line}");
    }
    let summary = format!(
        "gradcheck: {} (worst rel err {worst:.3e}, tolerance {tolerance:.1e})",
        if failed { "FAIL" } else { "PASS" }
    );
    println!("{summary}");

    if let Some(out) = &args.out {
        let mut echo = Resolved::new("gradcheck");
        echo.set("out", out.display());
        echo.set("arch", spec.layers_to_string());
        echo.set("image_size", image_size);
        echo.set("channels", channels);
        echo.set("seed", seed);
        echo.set("tolerance", tolerance);
        echo.set("step", step);
        echo.set("samples_per_param", samples);
        echo.write_echo(out)?;
        fs::write(out.join("gradcheck.txt"), lines.join("\n") + "\n" + &summary + "\n")
            .map_err(|e| CliError::Data(format!("cannot write report: {e}")))?;
    }

    if failed {
        Err(CliError::Numeric("gradient check failed".into()))
    } else {
        Ok(())
    }
}
