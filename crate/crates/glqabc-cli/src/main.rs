//! Command-line driver: Pade-zero tables, closed-form reflection evaluation,
//! 1D reflection-map sweeps and 3D convergence studies.
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical failure.

use std::fs::File;
use std::io::BufWriter;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;

use glqabc::fem1d::{
    extract_reflection, extract_reflection_matrix, reflection_map, solve_1d, write_reflection_csv,
    GridSpec, Mesh1D, RightBoundary,
};
use glqabc::fem3d::{convergence_study, write_dat, SolverChoice};
use glqabc::specialfuncs::pade_zeros;
use glqabc::theory::{reflection_abc, Frequency, LayerSpec};

#[derive(Parser)]
#[command(name = "glqabc", version, about = "Absorbing boundary conditions of type (L,N) for the Helmholtz equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Solver {
    Direct,
    Gmres,
}

#[derive(Subcommand)]
enum Command {
    /// Print the zeros of the [N/N] Pade approximant of exp(-z).
    PadeZeros {
        /// Approximant order, 1..=16.
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=16))]
        n: u32,
    },
    /// Evaluate the closed-form reflection coefficient of a single-layer ABC.
    ReflectionFormula {
        /// Element degree N.
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=16))]
        n: u32,
        /// Wavenumber gamma as a complex literal (k = 0), e.g. "1.5-0.5i".
        #[arg(long, value_parser = parse_s)]
        s: Complex64,
        /// Layer stretch gamma_1.
        #[arg(long, value_parser = parse_complex)]
        gamma1: Complex64,
    },
    /// Sweep the two-cell 1D experiment over a gamma rectangle; write CSV.
    ReflectionMap {
        /// Element degree N.
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=8))]
        n: u32,
        /// Layer stretch gamma_1.
        #[arg(long, value_parser = parse_complex)]
        gamma1: Complex64,
        /// Grid columns across 0 < Re gamma < 8.
        #[arg(long, default_value_t = 81)]
        nx: usize,
        /// Grid rows across -8 < Im gamma < 8.
        #[arg(long, default_value_t = 161)]
        ny: usize,
        /// Output CSV path.
        #[arg(long)]
        out: String,
    },
    /// Solve the two-cell 1D problem at one gamma and report reflections.
    Solve1d {
        /// Element degree N.
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=8))]
        n: u32,
        /// Wavenumber gamma as a complex literal (k = 0).
        #[arg(long, value_parser = parse_s)]
        s: Complex64,
        /// Layer stretch gamma_1.
        #[arg(long, value_parser = parse_complex)]
        gamma1: Complex64,
    },
    /// 3D box-with-hole convergence study; append dat-format rows.
    Converge3d {
        /// Laplace parameter: a complex literal or one of case0|case1|case2.
        #[arg(long, value_parser = parse_s)]
        s: Complex64,
        /// Element degree N.
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=4))]
        n: u32,
        /// Refinement level (h = 2^-ref).
        #[arg(long = "ref", value_parser = clap::value_parser!(u32).range(1..=4))]
        refinement: u32,
        /// Largest layer count; layers run 1..=lmax.
        #[arg(long)]
        lmax: usize,
        /// Linear solver.
        #[arg(long, value_enum)]
        solver: Option<Solver>,
        /// Output dat path (appended).
        #[arg(long)]
        out: String,
        /// Allow lmax * N > 12.
        #[arg(long, default_value_t = false)]
        force: bool,
    },
}

/// Parses complex literals of the forms "a", "bi", "a+bi", "a-bi".
fn parse_complex(text: &str) -> Result<Complex64, String> {
    let t: String = text.trim().chars().filter(|c| !c.is_whitespace()).collect();
    if t.is_empty() {
        return Err("empty complex literal".into());
    }
    // split point: last +/- that is not leading and not an exponent sign
    let bytes = t.as_bytes();
    let mut split = None;
    for i in (1..bytes.len()).rev() {
        let c = bytes[i] as char;
        if (c == '+' || c == '-') && !matches!(bytes[i - 1] as char, 'e' | 'E') {
            split = Some(i);
            break;
        }
    }
    let part = |p: &str, imag: bool| -> Result<f64, String> {
        let p = if imag {
            p.strip_suffix(['i', 'I']).ok_or("imaginary part must end in i")?
        } else {
            p
        };
        match p {
            "" | "+" => Ok(1.0),
            "-" => Ok(-1.0),
            _ => p.parse::<f64>().map_err(|e| format!("bad number {p:?}: {e}")),
        }
    };
    if t.ends_with(['i', 'I']) {
        match split {
            Some(i) => Ok(Complex64::new(part(&t[..i], false)?, part(&t[i..], true)?)),
            None => Ok(Complex64::new(0.0, part(&t, true)?)),
        }
    } else {
        if split.is_some() {
            return Err(format!("trailing i expected in {text:?}"));
        }
        Ok(Complex64::new(part(&t, false)?, 0.0))
    }
}

/// Complex literal or one of the experiment presets case0|case1|case2.
fn parse_s(text: &str) -> Result<Complex64, String> {
    match text.trim() {
        "case0" => Ok(Complex64::new(4.0, 0.25)),
        "case1" => Ok(Complex64::new(0.25, 4.0)),
        "case2" => Ok(Complex64::new(0.0, 4.0)),
        other => parse_complex(other),
    }
}

fn format_root(z: Complex64) -> String {
    if z.im == 0.0 {
        format!("{:.8}", z.re)
    } else {
        format!("{:.8}{}{:.8}i", z.re, if z.im < 0.0 { "-" } else { "+" }, z.im.abs())
    }
}

fn cmd_pade_zeros(n: usize) -> u8 {
    let roots = match pade_zeros(n) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 3;
        }
    };
    // Table layout: real roots first (ascending), then conjugate pairs by
    // (real, imaginary).
    let mut real: Vec<_> = roots.iter().copied().filter(|z| z.im == 0.0).collect();
    let mut complex: Vec<_> = roots.iter().copied().filter(|z| z.im != 0.0).collect();
    real.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
    complex.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    for z in real.into_iter().chain(complex) {
        println!("{}", format_root(z));
    }
    0
}

fn cmd_reflection_formula(n: usize, gamma: Complex64, gamma1: Complex64) -> u8 {
    if gamma.re < 0.0 {
        eprintln!("error: Re s must be nonnegative");
        return 2;
    }
    let freq = Frequency::from_gamma(gamma);
    let spec = LayerSpec::uniform(n, vec![gamma1]);
    match reflection_abc(&freq, &spec) {
        Ok(r) => {
            println!("reflection = {:.12e}{}{:.12e}i", r.re, if r.im < 0.0 { "-" } else { "+" }, r.im.abs());
            println!("abs = {:.12e}", r.norm());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            3
        }
    }
}

fn cmd_reflection_map(n: usize, gamma1: Complex64, nx: usize, ny: usize, out: &str) -> u8 {
    if nx == 0 || ny == 0 {
        eprintln!("error: grid must be nonempty");
        return 2;
    }
    let grid = GridSpec::standard(nx, ny);
    let points = reflection_map(n, gamma1, &grid);
    let failures = points.iter().filter(|p| p.abs_reflection.is_none()).count();
    let file = match File::create(out) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: cannot write {out}: {e}");
            return 2;
        }
    };
    let mut w = BufWriter::new(file);
    if let Err(e) = write_reflection_csv(&points, &mut w) {
        eprintln!("error: {e}");
        return 3;
    }
    if let Some(best) = points
        .iter()
        .filter_map(|p| p.abs_reflection.map(|r| (r, p.gamma)))
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
    {
        println!("min_abs_reflection,{:.9e},re_gamma,{:.9},im_gamma,{:.9}", best.0, best.1.re, best.1.im);
    }
    if failures * 100 > points.len() {
        eprintln!("error: {failures} of {} grid points failed to solve", points.len());
        return 3;
    }
    0
}

fn cmd_solve1d(n: usize, gamma: Complex64, gamma1: Complex64) -> u8 {
    let mesh = Mesh1D::two_cell(gamma1);
    let one = Complex64::new(1.0, 0.0);
    let sol = match solve_1d(&mesh, gamma, n, one, RightBoundary::DirichletZero) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return 3;
        }
    };
    let freq = Frequency::from_gamma(gamma);
    let spec = LayerSpec::uniform(n, vec![gamma1]);
    let r_formula = reflection_abc(&freq, &spec).ok();
    let r1 = extract_reflection(&sol, 0, gamma, n);
    let r2 = extract_reflection_matrix(&sol, 0, gamma, n);
    println!("u_interface = {:?}", sol.vertex_value(1));
    match (r1, r2) {
        (Ok(a), Ok(b)) => {
            println!("reflection_parity = {:.12e}{}{:.12e}i", a.re, if a.im < 0.0 { "-" } else { "+" }, a.im.abs());
            println!("reflection_matrix = {:.12e}{}{:.12e}i", b.re, if b.im < 0.0 { "-" } else { "+" }, b.im.abs());
            if let Some(rf) = r_formula {
                println!("reflection_formula = {:.12e}{}{:.12e}i", rf.re, if rf.im < 0.0 { "-" } else { "+" }, rf.im.abs());
            }
            println!("abs_reflection = {:.12e}", a.norm());
            0
        }
        (e1, e2) => {
            if let Err(e) = e1 {
                eprintln!("error: {e}");
            }
            if let Err(e) = e2 {
                eprintln!("error: {e}");
            }
            3
        }
    }
}

fn cmd_converge3d(
    s: Complex64,
    n: usize,
    refinement: u32,
    lmax: usize,
    solver: Option<Solver>,
    out: &str,
    force: bool,
) -> u8 {
    if lmax == 0 {
        eprintln!("error: lmax must be positive");
        return 2;
    }
    if lmax * n > 12 && !force {
        eprintln!("error: lmax * N = {} exceeds 12; pass --force to override", lmax * n);
        return 2;
    }
    if s.re < 0.0 {
        eprintln!("error: Re s must be nonnegative");
        return 2;
    }
    let choice = match solver {
        None => SolverChoice::Auto,
        Some(Solver::Direct) => SolverChoice::Direct,
        Some(Solver::Gmres) => SolverChoice::Gmres,
    };
    let l_list: Vec<usize> = (1..=lmax).collect();
    let study = convergence_study(s, n, refinement, &l_list, choice);
    let file = match File::options().create(true).append(true).open(out) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: cannot open {out}: {e}");
            return 2;
        }
    };
    let mut w = BufWriter::new(file);
    if let Err(e) = write_dat(&study, &mut w) {
        eprintln!("error: {e}");
        return 3;
    }
    drop(w);
    println!("interp_error,{}", study.interpolation_error);
    let failed = study.rows.iter().filter(|(_, e)| e.is_none()).count();
    if failed > 0 {
        eprintln!("error: {failed} of {} solves failed", study.rows.len());
        return 3;
    }
    0
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::PadeZeros { n } => cmd_pade_zeros(n as usize),
        Command::ReflectionFormula { n, s, gamma1 } => {
            cmd_reflection_formula(n as usize, s, gamma1)
        }
        Command::ReflectionMap {
            n,
            gamma1,
            nx,
            ny,
            out,
        } => cmd_reflection_map(n as usize, gamma1, nx, ny, &out),
        Command::Solve1d { n, s, gamma1 } => cmd_solve1d(n as usize, s, gamma1),
        Command::Converge3d {
            s,
            n,
            refinement,
            lmax,
            solver,
            out,
            force,
        } => cmd_converge3d(s, n as usize, refinement, lmax, solver, &out, force),
    };
    ExitCode::from(code)
}
