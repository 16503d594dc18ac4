use resboot_core::basis::{shore_dictionary, DEFAULT_RADIAL_ORDER, DEFAULT_ZETA};
use resboot_core::gradients::DEFAULT_B0_THRESHOLD;
use resboot_core::phantom::{add_noise, generate, in_span_scan, MaskShape, NoiseModel, PhantomSpec, TissueLayout};
use serde_json::json;

use crate::args::PhantomArgs;
use crate::config::layer;
use crate::error::{usage, CliResult};
use crate::io::{parse_dtype, prepare_out_dir, required, save, save_json, save_scheme, scheme_or_builtin};
use crate::manifest::RunManifest;

const DEFAULT_COEFFICIENT_SCALE: f64 = 1e4;

fn resolve(args: &PhantomArgs) -> CliResult<PhantomArgs> {
    let mut a = layer(args, args.config.as_deref(), "phantom")?;
    let spec = PhantomSpec::default();
    let TissueLayout::Crossing {
        axial,
        radial,
        free_water,
    } = spec.layout
    else {
        unreachable!("default layout is the crossing phantom")
    };
    a.dims.get_or_insert(spec.dims.to_vec());
    a.b0_threshold.get_or_insert(DEFAULT_B0_THRESHOLD);
    a.s0.get_or_insert(spec.s0);
    a.noise.get_or_insert("gaussian".into());
    a.sigma.get_or_insert(20.0);
    a.seed.get_or_insert(spec.seed);
    a.mask.get_or_insert("full".into());
    a.axial.get_or_insert(axial);
    a.radial.get_or_insert(radial);
    a.free_water.get_or_insert(free_water);
    if a.in_span {
        a.coefficient_scale.get_or_insert(DEFAULT_COEFFICIENT_SCALE);
        a.radial_order.get_or_insert(DEFAULT_RADIAL_ORDER);
        a.zeta.get_or_insert(DEFAULT_ZETA);
    }
    a.dtype.get_or_insert("float64".into());
    Ok(a)
}

pub fn run(args: PhantomArgs) -> CliResult<()> {
    let a = resolve(&args)?;
    let out_dir = required(&a.out_dir, "out-dir")?.clone();
    let dims: [usize; 3] = a
        .dims
        .clone()
        .unwrap()
        .try_into()
        .map_err(|_| usage("--dims takes exactly three values"))?;
    let sigma = a.sigma.unwrap();
    let noise = match a.noise.as_deref().unwrap() {
        "none" => NoiseModel::None,
        "gaussian" => NoiseModel::Gaussian { sigma },
        "rician" => NoiseModel::Rician { sigma },
        other => return Err(usage(format!("unknown noise model `{other}`"))),
    };
    let mask = match a.mask.as_deref().unwrap() {
        "full" => MaskShape::Full,
        "ellipsoid" => MaskShape::Ellipsoid,
        other => return Err(usage(format!("unknown mask shape `{other}`"))),
    };
    let dtype = parse_dtype(a.dtype.as_deref().unwrap())?;
    let scheme = scheme_or_builtin(&a.bvals, &a.bvecs, a.b0_threshold)?;
    let spec = PhantomSpec {
        dims,
        layout: TissueLayout::Crossing {
            axial: a.axial.unwrap(),
            radial: a.radial.unwrap(),
            free_water: a.free_water.unwrap(),
        },
        s0: a.s0.unwrap(),
        noise,
        seed: a.seed.unwrap(),
        mask,
    };

    let (signals, noise_free, mask, description) = if a.in_span {
        spec.validate()?;
        let dictionary = shore_dictionary(&scheme, a.radial_order.unwrap(), a.zeta.unwrap())?;
        let clean = in_span_scan(
            &dictionary,
            &scheme,
            dims,
            spec.seed,
            a.coefficient_scale.unwrap(),
            spec.s0,
        )?;
        let mut noisy = clean.clone();
        add_noise(&mut noisy, noise, spec.seed);
        let description = json!({
            "kind": "in_span",
            "dims": dims,
            "s0": spec.s0,
            "noise": noise,
            "seed": spec.seed,
            "mask": spec.mask,
            "coefficient_scale": a.coefficient_scale,
            "dictionary": dictionary.params(),
        });
        (noisy, clean, spec.mask(), description)
    } else {
        let p = generate(&spec, &scheme)?;
        (
            p.signals,
            p.noise_free,
            p.mask,
            serde_json::to_value(&spec).expect("spec serializes"),
        )
    };

    prepare_out_dir(&out_dir)?;
    let mut manifest = RunManifest::new("phantom", &a);
    manifest.seed = a.seed;
    if let (Some(b), Some(v)) = (&a.bvals, &a.bvecs) {
        manifest.add_input("bvals", b)?;
        manifest.add_input("bvecs", v)?;
    }
    manifest.outputs.push(save(&signals, &out_dir, "signals.nii", dtype)?);
    manifest
        .outputs
        .push(save(&noise_free, &out_dir, "ground_truth.nii", dtype)?);
    manifest.outputs.push(save(
        &mask.to_volume(),
        &out_dir,
        "mask.nii",
        resboot_core::volumes::DataType::U8,
    )?);
    manifest.outputs.extend(save_scheme(&scheme, &out_dir, "dwi")?);
    manifest
        .outputs
        .push(save_json(&description, &out_dir, "phantom.json")?);
    manifest.report = json!({
        "channels": scheme.len(),
        "b0_channels": scheme.n_b0(),
        "masked_voxels": mask.count(),
    });
    manifest.write(&out_dir)
}
