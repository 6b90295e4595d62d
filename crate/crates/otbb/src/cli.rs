//! Command-line interface: `solve`, `bench`, `check-mesh` and
//! `export-system`.
//!
//! Configuration comes from an optional flat `key = value` file plus
//! flags; flags win. Exit codes: 0 success, 1 input error, 2 numerical
//! failure.

use crate::bench::{
    build_problem, diagonal_jobs, make_case, sweep, write_csv, CaseKind, RunResult, SweepJob,
};
use crate::error::{OtError, Result};
use crate::mesh::{embedded_mesh, load_mesh, CoarseMesh, TwoLevelMesh};
use crate::ops::TimeGrid;
use crate::precond::{setup, PrecondKind, HSS_ALPHA};
use crate::solve::{ip_continue, ip_solve, transport_cost, IpConfig};
use crate::state::{assemble_saddle, initial_state, PrimalDualState, Problem};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub command: String,
    pub case: String,
    pub mesh: String,
    pub refine: usize,
    pub timesteps: usize,
    pub precond: PrecondKind,
    pub mu0: f64,
    pub mu_min: f64,
    pub mu_factor: f64,
    pub eps_out: f64,
    pub inner_tol: Option<f64>,
    pub fgmres_cap: usize,
    pub output: PathBuf,
    /// μ at which `export-system` assembles the Newton system
    pub export_mu: f64,
    /// Newton step index at which `export-system` assembles (1 = first)
    pub export_newton: usize,
    /// mesh levels swept by `bench` (diagonal pairing)
    pub levels: usize,
    pub seed: u64,
    pub verbose: bool,
}

impl Default for CliConfig {
    fn default() -> CliConfig {
        let ip = IpConfig::default();
        CliConfig {
            command: String::new(),
            case: "gaussian".into(),
            mesh: "embedded".into(),
            refine: 0,
            timesteps: 8,
            precond: PrecondKind::Bb,
            mu0: ip.mu0,
            mu_min: ip.mu_min,
            mu_factor: ip.mu_factor,
            eps_out: ip.eps_out,
            inner_tol: None,
            fgmres_cap: ip.fgmres_cap,
            output: PathBuf::from("otbb-out"),
            export_mu: 1.0,
            export_newton: 1,
            levels: 4,
            seed: 0,
            verbose: false,
        }
    }
}

impl CliConfig {
    fn ip_config(&self) -> IpConfig {
        IpConfig {
            mu0: self.mu0,
            mu_min: self.mu_min,
            mu_factor: self.mu_factor,
            eps_out: self.eps_out,
            inner_tol: self.inner_tol,
            fgmres_cap: self.fgmres_cap,
            ..IpConfig::default()
        }
    }
}

fn parse_kv_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            OtError::Usage(format!(
                "{}:{}: expected 'key = value'",
                path.display(),
                lineno + 1
            ))
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn apply_key(cfg: &mut CliConfig, key: &str, value: &str) -> Result<()> {
    let usage = |what: &str| OtError::Usage(format!("invalid {what}: '{value}'"));
    match key {
        "case" => cfg.case = value.to_string(),
        "mesh" => cfg.mesh = value.to_string(),
        "refine" => cfg.refine = value.parse().map_err(|_| usage("refine"))?,
        "timesteps" => cfg.timesteps = value.parse().map_err(|_| usage("timesteps"))?,
        "precond" => {
            cfg.precond = PrecondKind::parse(value)
                .ok_or_else(|| OtError::Usage(format!("unknown preconditioner '{value}'")))?
        }
        "hss_alpha" => {
            let a: f64 = value.parse().map_err(|_| usage("hss_alpha"))?;
            cfg.precond = PrecondKind::Hss { alpha: a };
        }
        "mu0" => cfg.mu0 = value.parse().map_err(|_| usage("mu0"))?,
        "mu_min" => cfg.mu_min = value.parse().map_err(|_| usage("mu_min"))?,
        "mu_factor" => cfg.mu_factor = value.parse().map_err(|_| usage("mu_factor"))?,
        "eps_out" => cfg.eps_out = value.parse().map_err(|_| usage("eps_out"))?,
        "inner_tol" => cfg.inner_tol = Some(value.parse().map_err(|_| usage("inner_tol"))?),
        "fgmres_cap" => cfg.fgmres_cap = value.parse().map_err(|_| usage("fgmres_cap"))?,
        "output" => cfg.output = PathBuf::from(value),
        "export_mu" => cfg.export_mu = value.parse().map_err(|_| usage("export_mu"))?,
        "export_newton" => cfg.export_newton = value.parse().map_err(|_| usage("export_newton"))?,
        "levels" => cfg.levels = value.parse().map_err(|_| usage("levels"))?,
        "seed" => cfg.seed = value.parse().map_err(|_| usage("seed"))?,
        "verbose" => cfg.verbose = value.parse().map_err(|_| usage("verbose"))?,
        _ => return Err(OtError::Usage(format!("unknown key '{key}'"))),
    }
    Ok(())
}

fn validate(cfg: &CliConfig) -> Result<()> {
    if cfg.refine > 6 {
        return Err(OtError::Usage("refine must be in [0, 6]".into()));
    }
    if cfg.timesteps < 1 {
        return Err(OtError::Usage("timesteps must be >= 1".into()));
    }
    for (name, v) in [
        ("eps_out", cfg.eps_out),
        ("mu_min", cfg.mu_min),
        ("inner_tol", cfg.inner_tol.unwrap_or(0.5)),
    ] {
        if !(v > 0.0 && v < 1.0) {
            return Err(OtError::Usage(format!("{name} must be in (0, 1)")));
        }
    }
    if cfg.mu_factor <= 1.0 {
        return Err(OtError::Usage("mu_factor must exceed 1".into()));
    }
    if let PrecondKind::Hss { alpha } = cfg.precond {
        if alpha <= 0.0 {
            return Err(OtError::Usage("hss_alpha must be positive".into()));
        }
    }
    Ok(())
}

pub fn parse_config(args: &[String]) -> Result<CliConfig> {
    let mut cfg = CliConfig::default();
    if args.is_empty() {
        return Err(OtError::Usage(
            "usage: otbb <solve|bench|check-mesh|export-system> [--config FILE] [--key value ...]"
                .into(),
        ));
    }
    cfg.command = args[0].clone();
    if !matches!(
        cfg.command.as_str(),
        "solve" | "bench" | "check-mesh" | "export-system"
    ) {
        return Err(OtError::Usage(format!("unknown command '{}'", cfg.command)));
    }
    // first pass: config file (flags override it afterwards)
    let mut flags: Vec<(String, String)> = Vec::new();
    let mut i = 1;
    while i < args.len() {
        let flag = args[i]
            .strip_prefix("--")
            .ok_or_else(|| OtError::Usage(format!("expected a --flag, got '{}'", args[i])))?;
        let value = args
            .get(i + 1)
            .ok_or_else(|| OtError::Usage(format!("--{flag} needs a value")))?;
        if flag == "config" {
            for (k, v) in parse_kv_file(Path::new(value))? {
                apply_key(&mut cfg, &k, &v)?;
            }
        } else {
            flags.push((flag.replace('-', "_"), value.clone()));
        }
        i += 2;
    }
    for (k, v) in flags {
        apply_key(&mut cfg, &k, &v)?;
    }
    validate(&cfg)?;
    Ok(cfg)
}

fn load_coarse(cfg: &CliConfig) -> Result<CoarseMesh> {
    let mut mesh = if cfg.mesh == "embedded" {
        embedded_mesh()
    } else {
        load_mesh(Path::new(&cfg.mesh))?
    };
    for _ in 0..cfg.refine {
        mesh = mesh.refine();
    }
    Ok(mesh)
}

fn build_cfg_problem(cfg: &CliConfig) -> Result<Problem> {
    let case = make_case(&cfg.case)?;
    if cfg.mesh == "embedded" {
        build_problem(&case, cfg.refine, cfg.timesteps)
    } else {
        let coarse = load_coarse(cfg)?;
        let (rho0, rho1) = crate::bench::discretize_boundary(&case, &coarse)?;
        let two = TwoLevelMesh::build(coarse)?;
        Problem::new(two, TimeGrid::new(cfg.timesteps), rho0, rho1)
    }
}

/// FNV-1a over the mesh geometry, used to tie checkpoints to meshes.
fn mesh_hash(mesh: &CoarseMesh) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    for v in &mesh.vertices {
        eat(&v[0].to_bits().to_le_bytes());
        eat(&v[1].to_bits().to_le_bytes());
    }
    for c in &mesh.cells {
        for &i in c {
            eat(&(i as u64).to_le_bytes());
        }
    }
    h
}

fn write_vector<W: Write>(w: &mut W, name: &str, v: &[f64]) -> std::io::Result<()> {
    write!(w, "{name} {}", v.len())?;
    for x in v {
        write!(w, " {x:.17e}")?;
    }
    writeln!(w)
}

/// Save the primal-dual state: a flat-text vector file plus a JSON
/// sidecar carrying μ, K and the mesh hash.
pub fn save_checkpoint(path: &Path, p: &Problem, st: &PrimalDualState) -> Result<()> {
    let mut body = Vec::new();
    write_vector(&mut body, "phi", &st.phi)?;
    write_vector(&mut body, "rho", &st.rho)?;
    write_vector(&mut body, "s", &st.s)?;
    write_vector(&mut body, "lambda", &st.lambda)?;
    std::fs::write(path, body)?;
    let meta = format!(
        "{{\"mu\": {:e}, \"k\": {}, \"mesh_hash\": \"{:016x}\"}}\n",
        st.mu,
        p.grid.k,
        mesh_hash(&p.two.coarse)
    );
    std::fs::write(path.with_extension("meta.json"), meta)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path, p: &Problem) -> Result<PrimalDualState> {
    let text = std::fs::read_to_string(path)?;
    let mut vectors: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for line in text.lines() {
        let mut it = line.split_whitespace();
        let name = it
            .next()
            .ok_or_else(|| OtError::Parse("empty checkpoint line".into()))?;
        let len: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| OtError::Parse("bad checkpoint length".into()))?;
        let vals: Vec<f64> = it
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| OtError::Parse(format!("bad checkpoint value: {e}")))?;
        if vals.len() != len {
            return Err(OtError::Parse(format!(
                "checkpoint vector '{name}': expected {len} values, found {}",
                vals.len()
            )));
        }
        vectors.insert(name.to_string(), vals);
    }
    let meta = std::fs::read_to_string(path.with_extension("meta.json"))?;
    let grab = |key: &str| -> Result<String> {
        let pat = format!("\"{key}\":");
        let idx = meta
            .find(&pat)
            .ok_or_else(|| OtError::Parse(format!("checkpoint meta missing '{key}'")))?;
        let rest = &meta[idx + pat.len()..];
        let end = rest.find([',', '}']).unwrap_or(rest.len());
        Ok(rest[..end].trim().trim_matches('"').to_string())
    };
    let mu: f64 = grab("mu")?
        .parse()
        .map_err(|_| OtError::Parse("bad mu in checkpoint meta".into()))?;
    let k: usize = grab("k")?
        .parse()
        .map_err(|_| OtError::Parse("bad k in checkpoint meta".into()))?;
    let hash = grab("mesh_hash")?;
    if k != p.grid.k {
        return Err(OtError::State(format!(
            "checkpoint has K={k}, problem has K={}",
            p.grid.k
        )));
    }
    if hash != format!("{:016x}", mesh_hash(&p.two.coarse)) {
        return Err(OtError::State("checkpoint mesh hash mismatch".into()));
    }
    let take = |name: &str, len: usize| -> Result<Vec<f64>> {
        let v = vectors
            .get(name)
            .ok_or_else(|| OtError::Parse(format!("checkpoint missing '{name}'")))?;
        if v.len() != len {
            return Err(OtError::Shape(format!(
                "checkpoint '{name}' has length {}, expected {len}",
                v.len()
            )));
        }
        Ok(v.clone())
    };
    Ok(PrimalDualState {
        phi: take("phi", p.n())?,
        rho: take("rho", p.m())?,
        s: take("s", p.m())?,
        lambda: take("lambda", p.grid.k)?,
        mu,
    })
}

fn cmd_solve(cfg: &CliConfig) -> Result<i32> {
    let started = std::time::Instant::now();
    let case = CaseKind::parse(&cfg.case)
        .ok_or_else(|| OtError::Usage(format!("unknown case '{}'", cfg.case)))?;
    let p = build_cfg_problem(cfg)?;
    let report = ip_solve(&p, cfg.precond, &cfg.ip_config())?;
    std::fs::create_dir_all(&cfg.output)?;
    let result = RunResult {
        job: SweepJob {
            case,
            mesh_level: cfg.refine,
            k: cfg.timesteps,
            precond: cfg.precond,
        },
        metrics: report.metrics.clone(),
        converged: report.converged,
        cost: transport_cost(&p, &report.state).ok(),
        error: report.failure.clone(),
    };
    let mut csv = Vec::new();
    write_csv(&mut csv, std::slice::from_ref(&result))?;
    std::fs::write(cfg.output.join("metrics.csv"), csv)?;
    save_checkpoint(&cfg.output.join("state.txt"), &p, &report.state)?;
    if cfg.verbose {
        for m in &report.metrics {
            println!(
                "ip {} mu {:.3e}: {} systems, {:.1} outer/system",
                m.ip_iter, m.mu, m.linsys, m.outer_per_linsys
            );
        }
    }
    let total_linsys: usize = report.metrics.iter().map(|m| m.linsys).sum();
    println!(
        "cost {:.6} linsys {} wall {:.2}s {}",
        result.cost.unwrap_or(f64::NAN),
        total_linsys,
        started.elapsed().as_secs_f64(),
        if report.converged { "converged" } else { "FAILED" }
    );
    if report.converged {
        Ok(0)
    } else {
        if let Some(msg) = &report.failure {
            eprintln!("solver failure: {msg}");
        }
        Ok(2)
    }
}

fn cmd_bench(cfg: &CliConfig) -> Result<i32> {
    let cases: Vec<CaseKind> = if cfg.case == "all" {
        vec![CaseKind::Gaussian, CaseKind::Translation, CaseKind::Compression]
    } else {
        vec![CaseKind::parse(&cfg.case)
            .ok_or_else(|| OtError::Usage(format!("unknown case '{}'", cfg.case)))?]
    };
    let preconds = vec![
        PrecondKind::Hss { alpha: HSS_ALPHA },
        PrecondKind::PrimalSchur,
        PrecondKind::Simple,
        PrecondKind::Bb,
    ];
    let jobs = diagonal_jobs(&cases, &preconds, cfg.levels);
    let results = sweep(&jobs, &cfg.ip_config());
    std::fs::create_dir_all(&cfg.output)?;
    let mut csv = Vec::new();
    write_csv(&mut csv, &results)?;
    std::fs::write(cfg.output.join("bench.csv"), csv)?;
    let failed = results.iter().filter(|r| !r.converged).count();
    println!(
        "{} runs, {} failed, csv at {}",
        results.len(),
        failed,
        cfg.output.join("bench.csv").display()
    );
    Ok(if failed == 0 { 0 } else { 2 })
}

fn cmd_check_mesh(cfg: &CliConfig) -> Result<i32> {
    let coarse = load_coarse(cfg)?;
    let report = coarse.validate_admissibility();
    let two = TwoLevelMesh::build(coarse)?;
    let fine_report = two.fine.validate_admissibility(two.coarse.diameter());
    let worst = |r: &crate::mesh::AdmissibilityReport| {
        r.edges
            .iter()
            .map(|e| e.angle_error)
            .fold(0.0, f64::max)
    };
    println!(
        "coarse: {} cells, {} internal edges, worst angle error {:.3e}, {}",
        two.coarse.num_cells(),
        report.edges.len(),
        worst(&report),
        if report.all_pass { "pass" } else { "FAIL" }
    );
    println!(
        "fine:   {} cells, {} internal edges, worst angle error {:.3e}, {}",
        two.fine.num_cells,
        fine_report.edges.len(),
        worst(&fine_report),
        if fine_report.all_pass { "pass" } else { "FAIL" }
    );
    if cfg.verbose {
        for e in report.edges.iter().filter(|e| !e.pass) {
            println!("coarse edge {}: angle {:.3e} w {:.3e}", e.edge, e.angle_error, e.w);
        }
    }
    Ok(if report.all_pass && fine_report.all_pass {
        0
    } else {
        2
    })
}

fn cmd_export_system(cfg: &CliConfig) -> Result<i32> {
    let p = build_cfg_problem(cfg)?;
    let ip = cfg.ip_config();
    let mut st = initial_state(&p, cfg.export_mu);
    if cfg.export_newton > 1 {
        // advance to the requested Newton step at this μ
        let warm = IpConfig {
            mu0: cfg.export_mu,
            mu_min: cfg.export_mu,
            newton_max: cfg.export_newton - 1,
            newton_tol: 0.0,
            ..ip
        };
        let _ = ip_continue(&p, cfg.precond, &warm, &mut st)?;
        st.mu = cfg.export_mu;
    }
    let shifted = cfg.precond.shifted();
    let sys = assemble_saddle(&p, &st, shifted)?;
    std::fs::create_dir_all(&cfg.output)?;
    let dump = |name: &str, m: &crate::sparse::CsrMatrix| -> Result<()> {
        m.write_matrix_market(&cfg.output.join(format!("{name}.mtx")))
    };
    dump("A", &sys.a_matrix())?;
    dump("B", &sys.b)?;
    dump("C", &crate::sparse::CsrMatrix::from_diag(&sys.c_diag))?;
    // auxiliary operators of every preconditioner, independent of the
    // configured kind
    for kind in [PrecondKind::PrimalSchur, PrecondKind::Simple, PrecondKind::Bb] {
        let pc = setup(kind, &p, &sys, &st)?;
        for (name, m) in pc.export_matrices() {
            let file = match name {
                "schur_s" => "S",
                "simple_s" => "S_tilde",
                "bb_a_tilde" => "A_tilde",
                "bb_b_tilde" => "B_tilde",
                "bb_schur" => "schur_4_26",
                other => other,
            };
            dump(file, m)?;
        }
    }
    println!(
        "exported n={} m={} systems at mu={:e} to {}",
        sys.n,
        sys.m,
        st.mu,
        cfg.output.display()
    );
    Ok(0)
}

/// Entry point used by `main`: parse, dispatch, map errors to the exit
/// contract (0 ok, 1 input error, 2 numerical failure).
pub fn run(args: &[String]) -> i32 {
    let cfg = match parse_config(args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            return 1;
        }
    };
    let out = match cfg.command.as_str() {
        "solve" => cmd_solve(&cfg),
        "bench" => cmd_bench(&cfg),
        "check-mesh" => cmd_check_mesh(&cfg),
        "export-system" => cmd_export_system(&cfg),
        _ => unreachable!("validated in parse_config"),
    };
    match out {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            match e {
                OtError::Solver(_) | OtError::State(_) => 2,
                _ => 1,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<String> {
        s.split_whitespace().map(|t| t.to_string()).collect()
    }

    fn temp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "otbb-test-{tag}-{}",
            std::process::id()
        ));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn parse_flags_and_defaults() {
        let cfg = parse_config(&args(
            "solve --case translation --refine 1 --timesteps 8 --precond bb",
        ))
        .unwrap();
        assert_eq!(cfg.case, "translation");
        assert_eq!(cfg.refine, 1);
        assert_eq!(cfg.timesteps, 8);
        assert_eq!(cfg.precond, PrecondKind::Bb);
        assert!((cfg.mu_min - 5e-7).abs() < 1e-20);

        assert!(parse_config(&args("solve --timesteps 0")).is_err());
        assert!(parse_config(&args("fly")).is_err());
        assert!(parse_config(&args("solve --no-such-key 1")).is_err());
        assert!(parse_config(&args("solve --refine 9")).is_err());
    }

    #[test]
    fn config_file_with_flag_override() {
        let dir = temp_dir("cfg");
        let file = dir.join("run.conf");
        std::fs::write(&file, "precond = simple\ntimesteps = 4\n# comment\n").unwrap();
        let cfg = parse_config(&args(&format!(
            "solve --config {} --precond hss",
            file.display()
        )))
        .unwrap();
        assert_eq!(cfg.precond, PrecondKind::Hss { alpha: HSS_ALPHA });
        assert_eq!(cfg.timesteps, 4);
        std::fs::write(&file, "nonsense_key = 1\n").unwrap();
        assert!(parse_config(&args(&format!("solve --config {}", file.display()))).is_err());
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = temp_dir("ckpt");
        let case = make_case("translation").unwrap();
        let p = build_problem(&case, 0, 3).unwrap();
        let mut st = initial_state(&p, 0.04);
        for (i, v) in st.phi.iter_mut().enumerate() {
            *v = (i as f64).sin();
        }
        st.lambda = vec![0.1, -0.2, 0.3];
        let path = dir.join("state.txt");
        save_checkpoint(&path, &p, &st).unwrap();
        let back = load_checkpoint(&path, &p).unwrap();
        assert_eq!(back.phi, st.phi);
        assert_eq!(back.rho, st.rho);
        assert_eq!(back.s, st.s);
        assert_eq!(back.lambda, st.lambda);
        assert_eq!(back.mu, st.mu);
        // mismatched problem is rejected
        let p2 = build_problem(&case, 0, 4).unwrap();
        assert!(load_checkpoint(&path, &p2).is_err());
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn solve_command_full_run() {
        let dir = temp_dir("solve");
        let code = run(&args(&format!(
            "solve --case translation --refine 0 --timesteps 8 --precond bb --output {}",
            dir.display()
        )));
        assert_eq!(code, 0);
        let csv = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
        let lines: Vec<&str> = csv.trim().lines().collect();
        // header + ten IP iterations (μ = 1 … 5.12e-7)
        assert_eq!(lines.len(), 11);
        assert!(lines[1].starts_with("translation,0,8,bb,1,"));
        assert!(lines.iter().skip(1).all(|l| l.ends_with("true")));
        assert!(dir.join("state.txt").exists());
        assert!(dir.join("state.meta.json").exists());
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn solve_command_error_paths() {
        // unreachable mesh file -> input error
        let code = run(&args(
            "solve --case translation --mesh /no/such/mesh.txt --timesteps 4",
        ));
        assert_eq!(code, 1);
        // starved FGMRES cap -> numerical failure with partial CSV
        let dir = temp_dir("fail");
        let code = run(&args(&format!(
            "solve --case translation --timesteps 4 --precond simple --fgmres-cap 1 --output {}",
            dir.display()
        )));
        assert_eq!(code, 2);
        let csv = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
        assert!(csv.lines().any(|l| l.ends_with("false")));
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn check_mesh_command() {
        let code = run(&args("check-mesh --mesh embedded --refine 1"));
        assert_eq!(code, 0);
    }

    #[test]
    fn export_system_command() {
        let dir = temp_dir("export");
        let code = run(&args(&format!(
            "export-system --case gaussian --timesteps 2 --export-mu 1 --output {}",
            dir.display()
        )));
        assert_eq!(code, 0);
        let a = crate::sparse::CsrMatrix::read_matrix_market(&dir.join("A.mtx")).unwrap();
        let b = crate::sparse::CsrMatrix::read_matrix_market(&dir.join("B.mtx")).unwrap();
        let c = crate::sparse::CsrMatrix::read_matrix_market(&dir.join("C.mtx")).unwrap();
        let case = make_case("gaussian").unwrap();
        let p = build_problem(&case, 0, 2).unwrap();
        assert_eq!(a.rows, p.n());
        assert_eq!(a.cols, p.n());
        assert_eq!(b.rows, p.m());
        assert_eq!(b.cols, p.n());
        assert_eq!(c.rows, p.m());
        for name in ["S", "S_tilde", "A_tilde", "B_tilde", "schur_4_26"] {
            assert!(dir.join(format!("{name}.mtx")).exists(), "{name} missing");
        }
        let _ = std::fs::remove_dir_all(&dir);
    }
}
