use std::fs;
use std::path::{Path, PathBuf};

use resboot_core::gradients::{GradientScheme, DEFAULT_B0_THRESHOLD};
use resboot_core::nifti::{read_nifti, write_nifti};
use resboot_core::phantom::hcp_like_scheme;
use resboot_core::volumes::{DataType, Mask, Volume4D};

use crate::error::{usage, CliError, CliResult};

/// Prefixes i/o failures with the offending path.
fn at(path: &Path) -> impl Fn(resboot_core::Error) -> CliError + '_ {
    move |e| match e {
        resboot_core::Error::Io(io) => CliError::Core(resboot_core::Error::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        ))),
        other => CliError::Core(other),
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| at(path)(e.into()))
}

pub fn required<'a, T>(value: &'a Option<T>, flag: &str) -> CliResult<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| usage(format!("missing required --{flag}")))
}

pub fn load_scheme(bvals: &Path, bvecs: &Path, b0_threshold: Option<f64>) -> CliResult<GradientScheme> {
    let bvals_text = read_text(bvals)?;
    let bvecs_text = read_text(bvecs)?;
    Ok(GradientScheme::parse(
        &bvals_text,
        &bvecs_text,
        b0_threshold.unwrap_or(DEFAULT_B0_THRESHOLD),
    )?)
}

/// Scheme files when given, otherwise the built-in HCP-like scheme.
pub fn scheme_or_builtin(
    bvals: &Option<PathBuf>,
    bvecs: &Option<PathBuf>,
    b0_threshold: Option<f64>,
) -> CliResult<GradientScheme> {
    match (bvals, bvecs) {
        (Some(a), Some(b)) => load_scheme(a, b, b0_threshold),
        (None, None) => Ok(hcp_like_scheme()),
        _ => Err(usage("--bvals and --bvecs must be given together")),
    }
}

pub fn load_volume(path: &Path) -> CliResult<Volume4D> {
    read_nifti(path).map_err(at(path))
}

/// The mask file if given, otherwise every voxel.
pub fn load_mask(path: Option<&Path>, dims: [usize; 3]) -> CliResult<Mask> {
    match path {
        Some(p) => Ok(Mask::from_volume(&load_volume(p)?)?),
        None => Ok(Mask::full(dims)),
    }
}

pub fn parse_dtype(name: &str) -> CliResult<DataType> {
    name.parse().map_err(|_| usage(format!("unknown dtype `{name}`")))
}

pub fn prepare_out_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Writes a volume into `dir` and returns the file name.
pub fn save(volume: &Volume4D, dir: &Path, name: &str, dtype: DataType) -> CliResult<String> {
    write_nifti(volume, dir.join(name), dtype)?;
    Ok(name.to_string())
}

pub fn save_scheme(scheme: &GradientScheme, dir: &Path, stem: &str) -> CliResult<Vec<String>> {
    let (bvals, bvecs) = scheme.to_fsl();
    let names = vec![format!("{stem}.bval"), format!("{stem}.bvec")];
    fs::write(dir.join(&names[0]), bvals)?;
    fs::write(dir.join(&names[1]), bvecs)?;
    Ok(names)
}

pub fn save_json(value: &impl serde::Serialize, dir: &Path, name: &str) -> CliResult<String> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(dir.join(name), text + "\n")?;
    Ok(name.to_string())
}

/// Prints to stdout; a closed pipe (e.g. `| head`) is not an error.
pub fn emit(text: &str) -> CliResult<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}
