use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use partube_cli::decompose::Request;
use partube_cli::mesh::{build_mesh, MeshOptions};
use partube_cli::omega::{sample, to_csv, AxisRange, Slice};
use partube_cli::{check, decompose, io_error, scene, to_json, CliError};

#[derive(Parser)]
#[command(name = "partube", version, about = "Partial tubes, warped and quasi-warped products")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build every construction and run its verification suites.
    Check {
        scene: PathBuf,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract a partial-tube triple from a construction.
    Decompose {
        scene: PathBuf,
        #[arg(long)]
        construction: String,
        /// Chart block sizes, fiber first (defaults to the construction's chart).
        #[arg(long, value_delimiter = ',')]
        chart: Option<Vec<usize>>,
        /// Fiber-block parameters of the sheet carrying the base.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        base_point: Option<Vec<f64>>,
        /// Write the sampled triple as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export a two-parameter construction as an OBJ mesh.
    Mesh {
        scene: PathBuf,
        #[arg(long)]
        construction: String,
        #[arg(long, default_value_t = 64)]
        resolution: usize,
        #[arg(long)]
        out: PathBuf,
        /// Keep only the first three ambient coordinates.
        #[arg(long)]
        project: bool,
    },
    /// Regular-set margins over a two-dimensional fiber slice, as CSV.
    Omega {
        scene: PathBuf,
        #[arg(long)]
        construction: String,
        /// Two fiber axes, e.g. `0,1`.
        #[arg(long, value_delimiter = ',', num_args = 1)]
        axes: Vec<usize>,
        /// Two ranges `lo:hi:n`, e.g. `-3:1:41,-2:2:41`.
        #[arg(long, allow_hyphen_values = true)]
        range: String,
        /// Values of all fiber coordinates off the slice.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        fixed: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| io_error(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Check { scene, out } => {
            let s = scene::load(&scene)?;
            let report = check::run(&s);
            write_out(out.as_deref(), &to_json(&report))?;
            if report.pass {
                Ok(())
            } else {
                Err(CliError::Failed)
            }
        }
        Command::Decompose {
            scene,
            construction,
            chart,
            base_point,
            out,
        } => {
            let s = scene::load(&scene)?;
            let req = Request {
                construction: &construction,
                chart,
                base_point,
            };
            let (report, fragment) = decompose::run(&s, &req)?;
            print!("{}", to_json(&report));
            if let (Some(p), Some(f)) = (out.as_deref(), &fragment) {
                write_out(Some(p), &to_json(f))?;
            }
            if report.pass {
                Ok(())
            } else {
                Err(CliError::Failed)
            }
        }
        Command::Mesh {
            scene,
            construction,
            resolution,
            out,
            project,
        } => {
            let s = scene::load(&scene)?;
            let built = s.build(s.construction(&construction)?)?;
            let mesh = build_mesh(
                &built,
                MeshOptions {
                    resolution,
                    project,
                    singular_tol: s.tolerances().mesh_singular,
                },
            )?;
            write_out(Some(&out), &mesh.to_obj())?;
            eprintln!(
                "{} vertices, {} triangles, {} omitted",
                mesh.vertices.len(),
                mesh.triangles.len(),
                mesh.omitted
            );
            Ok(())
        }
        Command::Omega {
            scene,
            construction,
            axes,
            range,
            fixed,
            out,
        } => {
            let [i, j] = axes[..] else {
                return Err(CliError::Usage("--axes needs two indices".into()));
            };
            let rs: Vec<AxisRange> = range.split(',').map(AxisRange::parse).collect::<Result<_, _>>()?;
            let [a, b] = rs[..] else {
                return Err(CliError::Usage("--range needs two ranges".into()));
            };
            let s = scene::load(&scene)?;
            let built = s.build(s.construction(&construction)?)?;
            let slice = Slice {
                axes: [i, j],
                ranges: [a, b],
                fixed: fixed.unwrap_or_default(),
            };
            let rows = sample(&built, &slice)?;
            write_out(out.as_deref(), &to_csv([i, j], &rows)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Failed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
