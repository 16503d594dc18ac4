use std::fs;

use resboot_core::basis::{shore_dictionary, DEFAULT_RADIAL_ORDER, DEFAULT_ZETA};
use resboot_core::gradients::DEFAULT_B0_THRESHOLD;
use serde_json::json;

use crate::args::BasisDumpArgs;
use crate::config::layer;
use crate::error::CliResult;
use crate::io::{prepare_out_dir, required, save_json, scheme_or_builtin};
use crate::manifest::RunManifest;

pub fn dump(args: BasisDumpArgs) -> CliResult<()> {
    let mut a = layer(&args, args.config.as_deref(), "basis dump")?;
    a.b0_threshold.get_or_insert(DEFAULT_B0_THRESHOLD);
    a.radial_order.get_or_insert(DEFAULT_RADIAL_ORDER);
    a.zeta.get_or_insert(DEFAULT_ZETA);
    let out_dir = required(&a.out_dir, "out-dir")?.clone();

    let scheme = scheme_or_builtin(&a.bvals, &a.bvecs, a.b0_threshold)?;
    let dictionary = shore_dictionary(&scheme, a.radial_order.unwrap(), a.zeta.unwrap())?;

    prepare_out_dir(&out_dir)?;
    let mut manifest = RunManifest::new("basis dump", &a);
    if let (Some(b), Some(v)) = (&a.bvals, &a.bvecs) {
        manifest.add_input("bvals", b)?;
        manifest.add_input("bvecs", v)?;
    }
    fs::write(out_dir.join("dictionary.txt"), dictionary.to_text())?;
    manifest.outputs.push("dictionary.txt".into());
    let sidecar = json!({
        "rows": dictionary.n_rows(),
        "atoms": dictionary.n_atoms(),
        "params": dictionary.params(),
        "atom_labels": dictionary.atoms(),
        "channels": dictionary.channels(),
    });
    manifest.outputs.push(save_json(&sidecar, &out_dir, "dictionary.json")?);
    manifest.report = json!({ "rows": dictionary.n_rows(), "atoms": dictionary.n_atoms() });
    manifest.write(&out_dir)
}
