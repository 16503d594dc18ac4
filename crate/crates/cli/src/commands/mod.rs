mod augment;
mod basis;
mod dice;
mod fit;
mod phantom;
mod stats;
mod subsample;

use crate::args::{BasisCommand, Command};
use crate::error::CliResult;

pub fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Phantom(a) => phantom::run(a),
        Command::Basis(BasisCommand::Dump(a)) => basis::dump(a),
        Command::Fit(a) => fit::run(a),
        Command::Augment(a) => augment::run(a),
        Command::Subsample(a) => subsample::run(a),
        Command::Dice(a) => dice::run(a),
        Command::Stats(a) => stats::run(a),
    }
}
