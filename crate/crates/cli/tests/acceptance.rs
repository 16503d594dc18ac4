//! Acceptance criteria, one line each. Run with
//! `cargo test -p resboot --test acceptance`.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use resboot_core::basis::{shore_atom_count, shore_atoms, shore_dictionary, AtomLabel, Dictionary};
use resboot_core::bootstrap::{
    bootstrap_b0_voxel, bootstrap_noise, bootstrap_scan, bootstrap_voxel, estimate_noise_sigma, BootstrapPlan,
};
use resboot_core::fitting::{build_fit_operator, fit_scan, FitOperator, FitStore};
use resboot_core::gradients::{GradientScheme, ShellRequest, SubsampleStrategy};
use resboot_core::metrics::{dice, mean_dice, LabelVolume};
use resboot_core::nifti::{read_nifti, write_nifti};
use resboot_core::phantom::{add_noise, hcp_like_scheme, in_span_scan, NoiseModel};
use resboot_core::rng::{splitmix64, voxel_stream, Substream};
use resboot_core::volumes::{DataType, Mask, Volume4D};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Hcp {
    scheme: GradientScheme,
    dictionary: Dictionary,
    op: FitOperator,
}

fn hcp() -> Hcp {
    let scheme = hcp_like_scheme();
    let dictionary = shore_dictionary(&scheme, 6, 700.0).unwrap();
    let op = build_fit_operator(&dictionary, 0.0).unwrap();
    Hcp { scheme, dictionary, op }
}

fn noisy_in_span(h: &Hcp, dims: [usize; 3], sigma: f64) -> (Volume4D, FitStore, Mask) {
    let mut scan = in_span_scan(&h.dictionary, &h.scheme, dims, 11, 1e4, 1000.0).unwrap();
    add_noise(&mut scan, NoiseModel::Gaussian { sigma }, 12);
    let mask = Mask::full(dims);
    let fits = fit_scan(&h.op, &h.dictionary, &scan, &mask).unwrap();
    (scan, fits, mask)
}

fn mean_sq(v: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in v {
        s += x * x;
        n += 1;
    }
    s / n as f64
}

fn std(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn leverage_trace() -> Outcome {
    let start = Instant::now();
    let h = hcp();
    let trace: f64 = h.op.hat_diag().iter().sum();
    let max = h.op.hat_diag().iter().copied().fold(0.0, f64::max);
    let took = start.elapsed();
    ensure(h.dictionary.n_rows() == 270 && h.dictionary.n_atoms() == 50, || {
        "expected 270x50 dictionary".into()
    })?;
    ensure((trace - 50.0).abs() < 1e-8, || format!("trace {trace}"))?;
    ensure(max < 1.0, || format!("max h {max}"))?;
    ensure(took < Duration::from_secs(5), || format!("took {took:?}"))?;
    Ok(format!(
        "trace = 50 + {:.1e}, max h = {max:.4}, {took:.2?}",
        trace - 50.0
    ))
}

fn residual_orthogonality() -> Outcome {
    let start = Instant::now();
    let h = hcp();
    let dims = [32, 32, 32];
    let scan = in_span_scan(&h.dictionary, &h.scheme, dims, 21, 1e4, 1000.0).unwrap();
    let mask = Mask::full(dims);
    let fits = fit_scan(&h.op, &h.dictionary, &scan, &mask).unwrap();
    let d = h.dictionary.matrix();
    let rows = h.dictionary.channels();
    let mut worst = 0.0f64;
    for (v, fit) in fits.iter() {
        let y: Vec<f64> = rows.iter().map(|&c| scan.voxel(v)[c]).collect();
        let norm_y = y.iter().map(|x| x * x).sum::<f64>().sqrt();
        let raw: Vec<f64> = y.iter().zip(fit.fitted).map(|(a, b)| a - b).collect();
        let mut g2 = 0.0;
        for j in 0..d.ncols() {
            let g: f64 = (0..d.nrows()).map(|i| d[(i, j)] * raw[i]).sum();
            g2 += g * g;
        }
        worst = worst.max(g2.sqrt() / norm_y);
    }
    let took = start.elapsed();
    ensure(fits.len() == 32 * 32 * 32, || "not every voxel fitted".into())?;
    ensure(worst < 1e-6, || format!("worst ratio {worst:e}"))?;
    ensure(took < Duration::from_secs(60), || format!("took {took:?}"))?;
    Ok(format!("max |D^T r|/|y| = {worst:.1e} over 32768 voxels, {took:.2?}"))
}

fn variance_correction() -> Outcome {
    let h = hcp();
    let (scan, fits, _) = noisy_in_span(&h, [20, 20, 10], 10.0);
    let rows = h.dictionary.channels();
    let corrected = mean_sq(fits.iter().flat_map(|(_, f)| f.corrected_residuals.iter().copied()));
    let raw = mean_sq(fits.iter().flat_map(|(v, f)| {
        let y = scan.voxel(v);
        rows.iter().zip(f.fitted).map(move |(&c, yh)| y[c] - yh)
    }));
    let count = fits.len() * rows.len();
    let ratio = raw / 100.0;
    let expected = 1.0 - 50.0 / 270.0;
    ensure(count >= 100_000, || format!("only {count} voxel-channels"))?;
    ensure((90.25..=110.25).contains(&corrected), || {
        format!("corrected variance {corrected}")
    })?;
    ensure((ratio - expected).abs() <= 0.02, || {
        format!("raw/sigma^2 {ratio}, expected {expected:.4}")
    })?;
    Ok(format!(
        "corrected var {corrected:.2}, raw/sigma^2 {ratio:.4} (1 - 50/270 = {expected:.4}), {count} voxel-channels"
    ))
}

fn scale_linearity() -> Outcome {
    let h = hcp();
    let (scan, fits, mask) = noisy_in_span(&h, [20, 20, 5], 10.0);
    let sigma_hat = estimate_noise_sigma(&fits, &mask).unwrap().pooled;
    let scales = [1.0, 2.0, 3.0, 4.0];
    let plan = BootstrapPlan {
        scales: scales.to_vec(),
        seed: 2024,
        ..BootstrapPlan::default()
    };
    let outputs = bootstrap_scan(&scan, &h.scheme, &fits, &plan, &mask).unwrap();
    let rows = h.dictionary.channels();
    let stds: Vec<f64> = outputs
        .iter()
        .map(|o| {
            let diffs: Vec<f64> = fits
                .iter()
                .flat_map(|(v, f)| {
                    let y = o.volume.voxel(v);
                    rows.iter().zip(f.fitted).map(move |(&c, yh)| y[c] - yh)
                })
                .collect();
            std(&diffs)
        })
        .collect();
    let n = scales.len() as f64;
    let mx = scales.iter().sum::<f64>() / n;
    let my = stds.iter().sum::<f64>() / n;
    let sxy: f64 = scales.iter().zip(&stds).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = scales.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    ensure((slope / sigma_hat - 1.0).abs() < 0.05, || {
        format!("slope {slope} vs sigma_hat {sigma_hat}")
    })?;
    ensure(intercept.abs() < 0.05 * sigma_hat, || format!("intercept {intercept}"))?;

    // pinned draws: one stream replayed at every r
    let mut max_ulps = 0.0f64;
    for (v, fit) in fits.iter().take(200) {
        let stream = || voxel_stream(2024, 0, 0, v as u64, Substream::Dw);
        let base = bootstrap_noise(fit.corrected_residuals, 1.0, &mut stream());
        let y1 = bootstrap_voxel(fit, 1.0, &mut stream());
        for r in [2.0, 3.0, 4.0] {
            let noise = bootstrap_noise(fit.corrected_residuals, r, &mut stream());
            for (a, b) in noise.iter().zip(&base) {
                ensure(*a == r * b, || format!("noise field not exact at voxel {v}, r = {r}"))?;
            }
            let yr = bootstrap_voxel(fit, r, &mut stream());
            for i in 0..yr.len() {
                let lhs = yr[i] - fit.fitted[i];
                let rhs = r * (y1[i] - fit.fitted[i]);
                // each side rounds once at the magnitude of its sum
                let unit = f64::EPSILON * (yr[i].abs() + r * y1[i].abs());
                max_ulps = max_ulps.max((lhs - rhs).abs() / unit);
            }
        }
    }
    ensure(max_ulps <= 2.0, || format!("difference drifts {max_ulps} ulps"))?;
    Ok(format!(
        "slope {slope:.3} vs sigma_hat {sigma_hat:.3}, intercept {intercept:.3}; r*noise exact, (y_r - yhat) within {max_ulps:.2} rounding units of r(y_1 - yhat)"
    ))
}

fn zero_scale_identity() -> Outcome {
    let h = hcp();
    let (scan, fits, mask) = noisy_in_span(&h, [6, 6, 4], 10.0);
    let plan = BootstrapPlan {
        scales: vec![0.0],
        ..BootstrapPlan::default()
    };
    let out = bootstrap_scan(&scan, &h.scheme, &fits, &plan, &mask).unwrap();
    for (v, fit) in fits.iter() {
        let y = out[0].volume.voxel(v);
        for (&c, yh) in h.dictionary.channels().iter().zip(fit.fitted) {
            ensure(y[c].to_bits() == yh.to_bits(), || {
                format!("voxel {v} channel {c} differs")
            })?;
        }
    }

    // one b0 channel: input passes through bitwise at any r
    let one_b0 = h
        .scheme
        .subsample(
            &[1000.0, 2000.0, 3000.0].map(|bvalue| ShellRequest { bvalue, count: 90 }),
            1,
            &SubsampleStrategy::FarthestPoint,
        )
        .unwrap();
    let scan1 = scan.gather_channels(&one_b0.index_map).unwrap();
    let dict1 = shore_dictionary(&one_b0.scheme, 6, 700.0).unwrap();
    let op1 = build_fit_operator(&dict1, 0.0).unwrap();
    let fits1 = fit_scan(&op1, &dict1, &scan1, &mask).unwrap();
    let b0 = one_b0.scheme.b0_indices()[0];
    let out1 = bootstrap_scan(&scan1, &one_b0.scheme, &fits1, &BootstrapPlan::default(), &mask).unwrap();
    for o in &out1 {
        for v in 0..scan1.n_voxels() {
            ensure(o.volume.voxel(v)[b0].to_bits() == scan1.voxel(v)[b0].to_bits(), || {
                format!("b0 changed at voxel {v}, r = {}", o.scale)
            })?;
        }
    }
    let mut rng = voxel_stream(0, 0, 0, 0, Substream::B0);
    let lone = [-0.0f64];
    let back = bootstrap_b0_voxel(&lone, 3.0, &mut rng).unwrap();
    ensure(back[0].to_bits() == lone[0].to_bits(), || {
        "single b0 not bitwise".into()
    })?;
    Ok(format!(
        "{} voxels bitwise at r = 0; single b0 unchanged at r in {{2, 3, 4}}",
        fits.len()
    ))
}

fn b0_bootstrap() -> Outcome {
    let voxels = 100_000;
    let r = 3.0;
    let mut b0 = Volume4D::new([voxels, 1, 1, 18], vec![1000.0; voxels * 18]).unwrap();
    add_noise(&mut b0, NoiseModel::Gaussian { sigma: 20.0 }, 31);
    let mut pool = Vec::with_capacity(voxels * 18);
    let mut added = Vec::with_capacity(voxels * 18);
    for v in 0..voxels {
        let y = b0.voxel(v);
        let mean = y.iter().sum::<f64>() / 18.0;
        pool.extend(y.iter().map(|x| x - mean));
        let out = bootstrap_b0_voxel(y, r, &mut voxel_stream(32, 0, 0, v as u64, Substream::B0)).unwrap();
        added.extend(out.iter().map(|x| x - mean));
    }
    let ratio = std(&added) / (r * std(&pool));
    ensure((ratio - 1.0).abs() < 0.10, || format!("ratio {ratio}"))?;
    Ok(format!(
        "std(y0~ - mean) / (3 std(E0)) = {ratio:.4} over {voxels} voxels"
    ))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_resboot"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn nii_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".nii"))
        .collect();
    names.sort();
    names
}

fn determinism_and_default_plan() -> (Outcome, Outcome) {
    let run = || -> Result<(Vec<String>, usize), String> {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let root = tmp.path();
        let ph = root.join("ph");
        let ph_s = ph.to_str().unwrap();
        run_cli(&[
            "phantom",
            "--out-dir",
            ph_s,
            "--dims",
            "10,8,6",
            "--in-span",
            "--sigma",
            "10",
            "--seed",
            "5",
        ])?;
        let dwi = ph.join("signals.nii");
        let bval = ph.join("dwi.bval");
        let bvec = ph.join("dwi.bvec");
        let mut reference: Option<Vec<Vec<u8>>> = None;
        let mut names = Vec::new();
        for threads in ["1", "4", "8"] {
            let out = root.join(format!("aug{threads}"));
            run_cli(&[
                "augment",
                "--dwi",
                dwi.to_str().unwrap(),
                "--bvals",
                bval.to_str().unwrap(),
                "--bvecs",
                bvec.to_str().unwrap(),
                "--mask",
                ph.join("mask.nii").to_str().unwrap(),
                "--seed",
                "77",
                "--out-dir",
                out.to_str().unwrap(),
                "--threads",
                threads,
            ])?;
            names = nii_files(&out);
            let bytes: Vec<Vec<u8>> = names.iter().map(|n| fs::read(out.join(n)).unwrap()).collect();
            match &reference {
                None => reference = Some(bytes),
                Some(r) => ensure(*r == bytes, || format!("{threads} threads differ from 1 thread"))?,
            }
        }
        let manifests = fs::read_dir(root.join("aug1"))
            .unwrap()
            .filter(|e| {
                e.as_ref()
                    .unwrap()
                    .file_name()
                    .to_string_lossy()
                    .ends_with("manifest.json")
            })
            .count();
        Ok((names, manifests))
    };
    let cli = run();
    let determinism = cli
        .as_ref()
        .map(|(names, _)| format!("{} augmented files byte-identical at 1, 4 and 8 threads", names.len()))
        .map_err(Clone::clone);

    let plan = (|| -> Outcome {
        let (names, manifests) = cli.clone()?;
        let expected = ["boot_r2_rep0.nii", "boot_r3_rep0.nii", "boot_r4_rep0.nii"];
        ensure(names == expected, || format!("augment wrote {names:?}"))?;
        ensure(manifests == 1, || format!("{manifests} manifests"))?;
        let h = hcp();
        let (scan, fits, mask) = noisy_in_span(&h, [3, 3, 3], 10.0);
        let plan = BootstrapPlan::default();
        let out = bootstrap_scan(&scan, &h.scheme, &fits, &plan, &mask).unwrap();
        let scales: Vec<f64> = out.iter().map(|o| o.scale).collect();
        ensure(scales == [2.0, 3.0, 4.0], || format!("scales {scales:?}"))?;
        Ok("default plan gives 3 scans (r = 2, 3, 4) through the library and the CLI".into())
    })();
    (determinism, plan)
}

fn brute_force_atoms(order: usize) -> Vec<AtomLabel> {
    let mut atoms = Vec::new();
    for l in (0..=order).step_by(2) {
        for n in 0..=order {
            for m in -(l as i32)..=(l as i32) {
                if n >= l && 2 * n - l <= order {
                    atoms.push(AtomLabel { n, l, m });
                }
            }
        }
    }
    atoms
}

fn dictionary_size() -> Outcome {
    let expected = [1, 7, 22, 50, 95];
    for (order, want) in [0, 2, 4, 6, 8].into_iter().zip(expected) {
        let brute = brute_force_atoms(order);
        ensure(brute.len() == want, || {
            format!("brute force gives {} at order {order}", brute.len())
        })?;
        ensure(shore_atom_count(order) == want, || {
            format!("closed form at order {order}")
        })?;
        let mut listed = shore_atoms(order);
        listed.sort_by_key(|a| (a.l, a.n, a.m));
        let mut b = brute;
        b.sort_by_key(|a| (a.l, a.n, a.m));
        ensure(listed == b, || format!("atom labels differ at order {order}"))?;
    }
    let h = hcp();
    ensure(h.dictionary.n_atoms() == 50, || "dictionary width".into())?;
    Ok("orders 0, 2, 4, 6, 8 give 1, 7, 22, 50, 95 atoms".into())
}

fn io_round_trip() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let n = 7 * 5 * 3 * 4;
    let mut state = 99u64;
    let mut next = || {
        state = splitmix64(state);
        state
    };
    let f32_data: Vec<f64> = (0..n)
        .map(|_| f32::from_bits((next() >> 32) as u32 & 0xBF7F_FFFF) as f64)
        .collect();
    let f64_data: Vec<f64> = (0..n).map(|_| f64::from_bits(next() & 0xBFEF_FFFF_FFFF_FFFF)).collect();
    for (dtype, data, name) in [
        (DataType::F32, f32_data, "a.nii"),
        (DataType::F64, f64_data.clone(), "b.nii"),
        (DataType::F64, f64_data, "c.nii.gz"),
    ] {
        let v = Volume4D::new([7, 5, 3, 4], data).unwrap();
        let p = tmp.path().join(name);
        write_nifti(&v, &p, dtype).map_err(|e| e.to_string())?;
        let back = read_nifti(&p).map_err(|e| e.to_string())?;
        let same = back
            .data()
            .iter()
            .zip(v.data())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same && back.dims() == v.dims(), || format!("{name} round trip differs"))?;
    }
    let sub = hcp_like_scheme()
        .subsample(
            &[ShellRequest {
                bvalue: 1000.0,
                count: 12,
            }],
            18,
            &SubsampleStrategy::FarthestPoint,
        )
        .map_err(|e| e.to_string())?;
    let dw_b: Vec<f64> = sub
        .scheme
        .dw_indices()
        .iter()
        .map(|&i| sub.scheme.bvalues()[i])
        .collect();
    ensure(sub.scheme.n_dw() == 12 && sub.scheme.n_b0() == 18, || {
        format!("{} DW, {} b0", sub.scheme.n_dw(), sub.scheme.n_b0())
    })?;
    ensure(dw_b.iter().all(|b| (b - 1000.0).abs() <= 50.0), || {
        format!("b-values {dw_b:?}")
    })?;
    Ok("float32/float64 (plain and gzip) bit-exact; HCP_1.25mm_12 subset = 12 x b1000 + 18 x b0".into())
}

fn dice_utility() -> Outcome {
    let lv = |bits: &[u8]| LabelVolume::new([bits.len(), 1, 1, 1], bits.iter().map(|&b| b != 0).collect()).unwrap();
    let a = lv(&[1, 1, 1, 1, 0, 0, 0, 0]);
    let check = |got: f64, want: f64, what: &str| ensure(got == want, || format!("{what}: {got}"));
    check(dice(&a, &a, 0).unwrap(), 1.0, "identity")?;
    check(dice(&a, &lv(&[0, 0, 0, 0, 1, 1, 1, 1]), 0).unwrap(), 0.0, "disjoint")?;
    check(
        dice(&a, &lv(&[0, 0, 1, 1, 1, 1, 0, 0]), 0).unwrap(),
        0.5,
        "half overlap",
    )?;

    let (nvox, nlab) = (500, 72);
    let mut state = 7u64;
    let mut bits = |p: u64| {
        (0..nvox * nlab)
            .map(|_| {
                state = splitmix64(state);
                state % 100 < p
            })
            .collect::<Vec<bool>>()
    };
    let da = bits(30);
    let db = bits(40);
    let va = LabelVolume::new([nvox, 1, 1, nlab], da.clone()).unwrap();
    let vb = LabelVolume::new([nvox, 1, 1, nlab], db.clone()).unwrap();
    let mut oracle = 0.0;
    for l in 0..nlab {
        let (mut x, mut y, mut both) = (0.0, 0.0, 0.0);
        for v in 0..nvox {
            let (p, q) = (da[v * nlab + l], db[v * nlab + l]);
            x += p as u8 as f64;
            y += q as u8 as f64;
            both += (p && q) as u8 as f64;
        }
        let d = if x + y == 0.0 { 1.0 } else { 2.0 * both / (x + y) };
        let got = dice(&va, &vb, l).unwrap();
        ensure((got - d).abs() <= 1e-12, || format!("label {l}: {got} vs {d}"))?;
        oracle += d;
    }
    oracle /= nlab as f64;
    let labels: Vec<usize> = (0..nlab).collect();
    let mean = mean_dice(&va, &vb, &labels).unwrap();
    ensure((mean - oracle).abs() <= 1e-12, || format!("mean {mean} vs {oracle}"))?;
    Ok(format!("fixtures exact; 72 labels match scalar loop, mean {mean:.6}"))
}

fn guarded<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn main() {
    let (determinism, default_plan) =
        guarded(|| Ok::<_, String>(determinism_and_default_plan())).unwrap_or_else(|e| (Err(e.clone()), Err(e)));
    let results: Vec<(&str, Outcome)> = vec![
        ("leverage trace", guarded(leverage_trace)),
        ("residual orthogonality", guarded(residual_orthogonality)),
        ("variance correction", guarded(variance_correction)),
        ("scale linearity", guarded(scale_linearity)),
        ("r = 0 identity", guarded(zero_scale_identity)),
        ("b0 bootstrap", guarded(b0_bootstrap)),
        ("determinism across threads", determinism),
        ("default plan", default_plan),
        ("dictionary size", guarded(dictionary_size)),
        ("nifti and subsample i/o", guarded(io_round_trip)),
        ("dice utility", guarded(dice_utility)),
    ];
    let mut failed = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
