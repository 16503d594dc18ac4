#![allow(dead_code)]

use resboot_core::basis::{shore_dictionary, Dictionary};
use resboot_core::fitting::{build_fit_operator, FitOperator};
use resboot_core::gradients::GradientScheme;
use resboot_core::phantom::hcp_like_scheme;

pub struct Setup {
    pub scheme: GradientScheme,
    pub dictionary: Dictionary,
    pub op: FitOperator,
}

pub fn hcp_setup() -> Setup {
    let scheme = hcp_like_scheme();
    let dictionary = shore_dictionary(&scheme, 6, 700.0).unwrap();
    let op = build_fit_operator(&dictionary, 0.0).unwrap();
    Setup { scheme, dictionary, op }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub fn std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}
