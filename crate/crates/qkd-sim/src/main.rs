use std::io::Write;
use std::process::ExitCode;

use qkd_sim::harness::{emit, run_experiment, ExperimentConfig};

const USAGE: &str = "\
qkd-sim: seeded Monte Carlo experiments over quantum key distribution
protocols with secret commuting transforms.

USAGE:
  qkd-sim --protocol PROTOCOL --theta R [FLAGS]

PROTOCOLS:
  three-stage           secret transforms on both sides; form set by --alice-form
  three-stage-complex   three-stage with the complex phase-pair form
  single-stage          pre-shared rotation angle; Bob inverts directly

FLAGS:
  --protocol NAME       three-stage | three-stage-complex | single-stage (required)
  --alice-form NAME     rotation | reflection | phase-pair (three-stage; default rotation)
  --theta R             Alice's angle; single-stage requires 0 <= R < pi (required)
  --phi R               Bob's angle (three-stage; required)
  --psi R               Eve's angle (clone-* and angle-guess strategies)
  --eve NAME            none | clone-duplicate | clone-forge | clone-block |
                        angle-guess | measure-resend (default none)
  --trials N            independent trials (default 100)
  --bits N              data bits per trial (default 128)
  --l N                 data qubits per frame (single-stage framing; default 64)
  --k N                 key-update qubits per frame (default 4)
  --seed U64            master seed (default 0)
  --output FORMAT       json | csv (default json)
  --config PATH         key=value file mirroring these flags; flags override it

Framing engages when --l or --k is given explicitly (single-stage only):
each trial then sends max(1, bits/l) frames of l data plus k key-update
qubits, re-keying theta = N*pi/2^k after every frame.

Results go to standard output, diagnostics to standard error. Exit codes:
0 success, 1 configuration error, 2 runtime protocol failure.
";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.is_empty() || args.iter().any(|a| a == "--help" || a == "-h") {
        print!("{USAGE}");
        return ExitCode::SUCCESS;
    }

    let config = match ExperimentConfig::parse(&args) {
        Ok(config) => config,
        Err(err) => {
            eprintln!("config error: {err}");
            return ExitCode::from(1);
        }
    };

    let stats = match run_experiment(&config) {
        Ok(stats) => stats,
        Err(err) => {
            eprintln!("run error: {err}");
            return ExitCode::from(2);
        }
    };

    let bytes = emit(&stats, config.output_format);
    if let Err(err) = std::io::stdout().write_all(&bytes) {
        eprintln!("write error: {err}");
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}
