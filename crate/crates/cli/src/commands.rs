use std::io::Write;

use serde::Serialize;

use cvqss::protocol::EmpiricalConditioning;
use cvqss::{
    build_kn_state, keyrate_qss, run_protocol, ChannelSpec, GaussianState, PartyLayout, PlayerFrame, ProtocolConfig,
    ProtocolReport, Quadrature, ResourceConfig, ThresholdScheme, Topology,
};
use nalgebra::DMatrix;

use crate::format::g12;
use crate::{
    io_error, CliError, Format, Globals, PointArgs, ResourceArgs, SimulateArgs, SweepArgs, ThresholdArgs, ValidateArgs,
};

pub const SWEEP_HEADER: &str = "r,T,K_eve,K_qss,V_xa_given_xbar,V_pa_given_pbar,V_pa_given_honest_max,E_ABC";

pub const DEFAULT_R: f64 = 1.15;
pub const DEFAULT_TRANSMISSIVITIES: [f64; 4] = [1.0, 0.95, 0.9, 0.85];

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

/// Resource-state settings after merging flags, config file and defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct Resource {
    pub n: usize,
    pub topology: Topology,
    pub excess_noise: f64,
    pub config: ResourceConfig,
}

impl Default for Resource {
    fn default() -> Self {
        Resource { n: 2, topology: Topology::Chain, excess_noise: 0.0, config: ResourceConfig::default() }
    }
}

impl Resource {
    pub fn resolve(g: &Globals, args: &ResourceArgs) -> Result<Self, CliError> {
        let d = Resource::default();
        let cfg = &g.config;
        let topology: String = cfg.resolve(args.topology.clone(), "topology", "chain".into())?;
        let squeezed: String = cfg.resolve(args.squeezed.clone(), "squeezed", "p".into())?;
        let frame: String = cfg.resolve(args.frame.clone(), "frame", "fourier".into())?;
        Ok(Resource {
            n: cfg.resolve(args.n, "n", d.n)?,
            topology: topology.parse().map_err(config_err)?,
            excess_noise: cfg.resolve(args.excess_noise, "excess-noise", d.excess_noise)?,
            config: ResourceConfig {
                squeezed: squeezed.parse::<Quadrature>().map_err(config_err)?,
                cz_weight: cfg.resolve(args.cz_weight, "cz-weight", d.config.cz_weight)?,
                frame: frame.parse::<PlayerFrame>().map_err(config_err)?,
            },
        })
    }

    pub fn build(&self, r: f64, transmissivity: f64) -> Result<(GaussianState, PartyLayout), CliError> {
        let spec = ChannelSpec::new(transmissivity, self.excess_noise)?;
        Ok(build_kn_state(self.n, r, &vec![spec; self.n], &self.topology, &self.config)?)
    }
}

fn resolve_point(g: &Globals, args: &PointArgs) -> Result<(f64, f64), CliError> {
    Ok((g.config.resolve(args.r, "r", DEFAULT_R)?, g.config.resolve(args.transmissivity, "T", 1.0)?))
}

fn resolve_scheme(g: &Globals, k: Option<usize>, n: usize) -> Result<ThresholdScheme, CliError> {
    let k = g.config.resolve(k, "k", n)?;
    Ok(ThresholdScheme::new(k, n)?)
}

/// Grid and resource for the key-rate sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub r_min: f64,
    pub r_max: f64,
    pub r_steps: usize,
    pub transmissivities: Vec<f64>,
    pub k: usize,
    pub resource: Resource,
}

impl Default for SweepConfig {
    /// Squeezing 0 → 1.5 in 61 steps, four loss levels, (2,2) on a chain.
    fn default() -> Self {
        SweepConfig {
            r_min: 0.0,
            r_max: 1.5,
            r_steps: 61,
            transmissivities: DEFAULT_TRANSMISSIVITIES.to_vec(),
            k: 2,
            resource: Resource::default(),
        }
    }
}

impl SweepConfig {
    pub fn resolve(g: &Globals, args: &SweepArgs) -> Result<Self, CliError> {
        let d = SweepConfig::default();
        let resource = Resource::resolve(g, &args.resource)?;
        let transmissivities = match (&args.transmissivities, g.config.raw("transmissivities")) {
            (Some(list), _) => list.clone(),
            (None, Some(raw)) => raw
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|e| CliError::Config(format!("transmissivities: {e}"))))
                .collect::<Result<_, _>>()?,
            (None, None) => d.transmissivities,
        };
        let cfg = SweepConfig {
            r_min: g.config.resolve(args.r_min, "r-min", d.r_min)?,
            r_max: g.config.resolve(args.r_max, "r-max", d.r_max)?,
            r_steps: g.config.resolve(args.r_steps, "r-steps", d.r_steps)?,
            transmissivities,
            k: g.config.resolve(args.k, "k", resource.n)?,
            resource,
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), CliError> {
        if !(self.r_min.is_finite() && self.r_max.is_finite()) || self.r_min < 0.0 || self.r_min > self.r_max {
            return Err(CliError::Config(format!("need 0 ≤ r-min ≤ r-max, got {} and {}", self.r_min, self.r_max)));
        }
        if self.r_steps == 0 {
            return Err(CliError::Config("r-steps must be at least 1".into()));
        }
        if self.transmissivities.is_empty() {
            return Err(CliError::Config("no transmissivities given".into()));
        }
        if let Some(t) = self.transmissivities.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(CliError::Config(format!("transmissivity {t} outside [0, 1]")));
        }
        ThresholdScheme::new(self.k, self.resource.n)?;
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        if self.r_steps == 1 {
            return vec![self.r_min];
        }
        let step = (self.r_max - self.r_min) / (self.r_steps - 1) as f64;
        (0..self.r_steps).map(|i| self.r_min + i as f64 * step).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub r: f64,
    #[serde(rename = "T")]
    pub transmissivity: f64,
    #[serde(rename = "K_eve")]
    pub k_eve: f64,
    #[serde(rename = "K_qss")]
    pub k_qss: f64,
    pub v_xa_given_xbar: f64,
    pub v_pa_given_pbar: f64,
    pub v_pa_given_honest_max: f64,
    #[serde(rename = "E_ABC")]
    pub e_abc: f64,
}

impl SweepRow {
    fn fields(&self) -> [f64; 8] {
        [
            self.r,
            self.transmissivity,
            self.k_eve,
            self.k_qss,
            self.v_xa_given_xbar,
            self.v_pa_given_pbar,
            self.v_pa_given_honest_max,
            self.e_abc,
        ]
    }
}

/// One row per `(r, T)`, loss levels outermost.
pub fn sweep_rows(cfg: &SweepConfig) -> Result<Vec<SweepRow>, CliError> {
    let scheme = ThresholdScheme::new(cfg.k, cfg.resource.n)?;
    let mut rows = Vec::new();
    for &t in &cfg.transmissivities {
        for r in cfg.grid() {
            let (state, layout) = cfg.resource.build(r, t)?;
            let report = keyrate_qss(&state, &layout, &scheme)?;
            let eve = &report.eavesdropping;
            rows.push(SweepRow {
                r,
                transmissivity: t,
                k_eve: eve.rate,
                k_qss: report.combined_rate,
                v_xa_given_xbar: eve.x_given_players.conditional_variance,
                v_pa_given_pbar: eve.p_given_players.conditional_variance,
                v_pa_given_honest_max: report.adversarial[report.binding_adversary].p_given_honest.conditional_variance,
                e_abc: eve.product,
            });
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv(rows: &[SweepRow], w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for row in rows {
        let line: Vec<String> = row.fields().iter().map(|v| g12(*v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn sweep(g: &Globals, args: &SweepArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let cfg = SweepConfig::resolve(g, args)?;
    let rows = sweep_rows(&cfg)?;
    let mut out = g.open_output(stdout)?;
    match g.format.unwrap_or(Format::Csv) {
        Format::Csv => write_sweep_csv(&rows, &mut out).map_err(io_error)?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &rows).map_err(|e| CliError::Io(e.to_string()))?;
            writeln!(out).map_err(io_error)?;
        }
    }
    out.flush().map_err(io_error)?;
    drop(out);
    if !g.quiet {
        if let Some(path) = &g.output {
            let _ = writeln!(stderr, "wrote {} rows to {}", rows.len(), path.display());
        }
    }
    Ok(())
}

fn braces(players: &[String]) -> String {
    format!("{{{}}}", players.join(","))
}

pub fn threshold(g: &Globals, args: &ThresholdArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let resource = Resource::resolve(g, &args.resource)?;
    let scheme = resolve_scheme(g, args.k, resource.n)?;
    let (r, t) = resolve_point(g, &args.point)?;
    let (state, layout) = resource.build(r, t)?;
    let report = keyrate_qss(&state, &layout, &scheme)?;
    let mut out = g.open_output(stdout)?;
    match g.format {
        Some(Format::Json) => {
            serde_json::to_writer_pretty(&mut out, &report).map_err(|e| CliError::Io(e.to_string()))?;
            writeln!(out).map_err(io_error)?;
        }
        Some(Format::Csv) => {
            writeln!(out, "kind,players,honest,variance,bits,binding").map_err(io_error)?;
            for (i, a) in report.access.iter().enumerate() {
                writeln!(
                    out,
                    "access,{},,{},{},{}",
                    a.players.join(" "),
                    g12(a.x_given_structure.conditional_variance),
                    g12(a.mutual_information),
                    i == report.binding_access
                )
                .map_err(io_error)?;
            }
            for (i, a) in report.adversarial.iter().enumerate() {
                writeln!(
                    out,
                    "adversarial,{},{},{},{},{}",
                    a.players.join(" "),
                    a.honest.join(" "),
                    g12(a.p_given_honest.conditional_variance),
                    g12(a.holevo_bound),
                    i == report.binding_adversary
                )
                .map_err(io_error)?;
            }
            writeln!(out, "total,,,,{},", g12(report.combined_rate)).map_err(io_error)?;
        }
        None => write_threshold_table(&report, &resource, r, t, &mut out).map_err(io_error)?,
    }
    out.flush().map_err(io_error)
}

fn write_threshold_table(
    report: &cvqss::KeyRateReport,
    resource: &Resource,
    r: f64,
    t: f64,
    out: &mut dyn Write,
) -> std::io::Result<()> {
    writeln!(
        out,
        "({},{})-threshold scheme on a {} of {} players, r = {}, T = {}",
        report.k,
        report.n,
        resource.topology.name(),
        report.n,
        g12(r),
        g12(t)
    )?;
    writeln!(out, "Var(x_A) = {}", g12(report.dealer_x_variance))?;
    writeln!(out)?;
    writeln!(out, "access structures ({}), minimum mutual information binds:", report.access.len())?;
    for (i, a) in report.access.iter().enumerate() {
        writeln!(
            out,
            "  {:<24} V(x_A|X) = {:<16} I = {:<16} bits{}",
            braces(&a.players),
            g12(a.x_given_structure.conditional_variance),
            g12(a.mutual_information),
            if i == report.binding_access { "  <- binding" } else { "" }
        )?;
    }
    writeln!(out)?;
    writeln!(out, "adversarial structures ({}), maximum Holevo bound binds:", report.adversarial.len())?;
    for (i, a) in report.adversarial.iter().enumerate() {
        writeln!(
            out,
            "  {:<24} honest {:<24} V(p_A|P) = {:<16} chi = {:<16} bits{}",
            braces(&a.players),
            braces(&a.honest),
            g12(a.p_given_honest.conditional_variance),
            g12(a.holevo_bound),
            if i == report.binding_adversary { "  <- binding" } else { "" }
        )?;
    }
    writeln!(out)?;
    writeln!(
        out,
        "eavesdropping-only rate: {} bits (E = {}, threshold e^-2 = {})",
        g12(report.eavesdropping.rate),
        g12(report.eavesdropping.product),
        g12(report.eavesdropping.threshold)
    )?;
    for d in &report.dishonest {
        writeln!(out, "dishonest {}: {} bits", braces(&d.dishonest), g12(d.rate))?;
    }
    writeln!(out, "K = {} bits", g12(report.combined_rate))?;
    writeln!(out, "verdict: {}", if report.secure { "secure key" } else { "no secure key" })
}

#[derive(Serialize)]
struct SimulationOutput<'a> {
    verdict: &'a str,
    report: &'a ProtocolReport,
}

fn verdict(report: &ProtocolReport) -> &'static str {
    if report.secure {
        "SECURE"
    } else {
        "INSECURE"
    }
}

pub fn simulation_config(g: &Globals, args: &SimulateArgs) -> Result<ProtocolConfig, CliError> {
    let d = ProtocolConfig::default();
    Ok(ProtocolConfig {
        rounds: g.config.resolve(args.rounds, "rounds", d.rounds)?,
        reveal_fraction: g.config.resolve(args.reveal_fraction, "reveal-fraction", d.reveal_fraction)?,
        basis_probability: g.config.resolve(args.basis_probability, "basis-probability", d.basis_probability)?,
        seed: g.seed,
    })
}

pub fn simulate(
    g: &Globals,
    args: &SimulateArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<(), CliError> {
    let resource = Resource::resolve(g, &args.resource)?;
    let scheme = resolve_scheme(g, args.k, resource.n)?;
    let (r, t) = resolve_point(g, &args.point)?;
    let (state, layout) = resource.build(r, t)?;
    let config = simulation_config(g, args)?;
    let report = run_protocol(&state, &layout, &scheme, &config)?;

    if let Some(path) = &g.output {
        let file =
            std::fs::File::create(path).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        let mut w = std::io::BufWriter::new(file);
        write_simulation_csv(&report, &mut w).map_err(io_error)?;
        w.flush().map_err(io_error)?;
        if !g.quiet {
            let _ = writeln!(stderr, "wrote estimate summary to {}", path.display());
        }
    }

    match g.format {
        Some(Format::Json) => {
            let out = SimulationOutput { verdict: verdict(&report), report: &report };
            serde_json::to_writer_pretty(&mut *stdout, &out).map_err(|e| CliError::Io(e.to_string()))?;
            writeln!(stdout).map_err(io_error)?;
        }
        _ => {
            if !g.quiet {
                write_simulation_text(&report, r, t, stdout).map_err(io_error)?;
            }
            writeln!(stdout, "{}", verdict(&report)).map_err(io_error)?;
        }
    }
    Ok(())
}

fn pm(e: &EmpiricalConditioning) -> String {
    format!("{} ± {}", g12(e.variance), g12(e.standard_error))
}

fn write_simulation_text(report: &ProtocolReport, r: f64, t: f64, out: &mut dyn Write) -> std::io::Result<()> {
    let c = &report.config;
    writeln!(
        out,
        "({},{}) protocol, r = {}, T = {}, rounds = {}, seed = {}, basis probability = {}, reveal fraction = {}",
        report.k,
        report.n,
        g12(r),
        g12(t),
        c.rounds,
        c.seed,
        g12(c.basis_probability),
        g12(c.reveal_fraction)
    )?;
    writeln!(out, "revealed rounds: {}, raw key rounds: {}", report.revealed_rounds, report.raw_key_rounds)?;
    let patterns: Vec<String> = report.pattern_counts.iter().map(|(p, n)| format!("{p}={n}")).collect();
    writeln!(out, "basis patterns ({}): {}", report.parties.join(""), patterns.join(" "))?;
    writeln!(out, "Var(x_A) = {}", pm(&report.dealer_x_variance))?;
    for a in &report.access {
        writeln!(
            out,
            "access {}: V(x_A|X) = {} (analytic {}, {} rounds), I = {} (analytic {})",
            braces(&a.players),
            pm(&a.x_given_structure),
            g12(a.analytic_variance),
            a.x_given_structure.sifted_rounds,
            g12(a.mutual_information),
            g12(a.analytic_mutual_information)
        )?;
    }
    for a in &report.adversarial {
        writeln!(
            out,
            "adversary {} honest {}: V(p_A|P) = {} (analytic {}, {} rounds), chi = {} (analytic {})",
            braces(&a.players),
            braces(&a.honest),
            pm(&a.p_given_honest),
            g12(a.analytic_variance),
            a.p_given_honest.sifted_rounds,
            g12(a.holevo_bound),
            g12(a.analytic_holevo_bound)
        )?;
    }
    let e = &report.eavesdropping;
    writeln!(
        out,
        "eavesdropping-only rate: {} ± {} bits (analytic {})",
        g12(e.rate),
        g12(e.rate_standard_error),
        g12(e.analytic_rate)
    )?;
    writeln!(
        out,
        "combined rate: {} ± {} bits (analytic {})",
        g12(report.combined_rate),
        g12(report.combined_rate_standard_error),
        g12(report.analytic_combined_rate)
    )
}

pub fn write_simulation_csv(report: &ProtocolReport, w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "quantity,structure,empirical,standard_error,analytic,sifted_rounds")?;
    let mut row = |q: &str, s: String, e: &EmpiricalConditioning, analytic: f64| {
        writeln!(w, "{q},{s},{},{},{},{}", g12(e.variance), g12(e.standard_error), g12(analytic), e.sifted_rounds)
    };
    for a in &report.access {
        row("V_xa_given_access", a.players.join(" "), &a.x_given_structure, a.analytic_variance)?;
    }
    for a in &report.adversarial {
        row("V_pa_given_honest", a.honest.join(" "), &a.p_given_honest, a.analytic_variance)?;
    }
    writeln!(
        w,
        "K_qss,,{},{},{},",
        g12(report.combined_rate),
        g12(report.combined_rate_standard_error),
        g12(report.analytic_combined_rate)
    )?;
    writeln!(
        w,
        "K_eve,,{},{},{},",
        g12(report.eavesdropping.rate),
        g12(report.eavesdropping.rate_standard_error),
        g12(report.eavesdropping.analytic_rate)
    )
}

/// Parses a covariance matrix from text: one row per line, values separated by
/// whitespace or commas, `#` comments allowed.
pub fn parse_covariance(text: &str) -> Result<DMatrix<f64>, CliError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|v| !v.is_empty())
            .map(|v| v.parse::<f64>().map_err(|e| CliError::Config(format!("covariance entry `{v}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    let dim = rows.len();
    if dim == 0 || !dim.is_multiple_of(2) || rows.iter().any(|r| r.len() != dim) {
        return Err(CliError::Config(format!("covariance must be a square 2m×2m matrix, got {dim} rows")));
    }
    Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
}

pub fn validate(g: &Globals, args: &ValidateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cov_file = args.cov_file.clone().or_else(|| g.config.raw("cov-file").map(Into::into));
    let (state, description) = match cov_file {
        Some(path) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
            let cov = parse_covariance(&text)?;
            let labels = (0..cov.nrows() / 2).map(|k| k.to_string()).collect();
            (GaussianState::from_covariance(cov, labels)?, path.display().to_string())
        }
        None => {
            let resource = Resource::resolve(g, &args.resource)?;
            let (r, t) = resolve_point(g, &args.point)?;
            let (state, _) = resource.build(r, t)?;
            let desc =
                format!("{} cluster, {} players, r = {}, T = {}", resource.topology.name(), resource.n, g12(r), g12(t));
            (state, desc)
        }
    };
    let d = state.validate();
    let mut out = g.open_output(stdout)?;
    match g.format {
        Some(Format::Json) => {
            serde_json::to_writer_pretty(&mut out, &d).map_err(|e| CliError::Io(e.to_string()))?;
            writeln!(out).map_err(io_error)?;
        }
        _ => {
            let nus: Vec<String> = d.symplectic_eigenvalues.iter().map(|v| g12(*v)).collect();
            writeln!(out, "state: {description}").map_err(io_error)?;
            writeln!(out, "modes: {}", state.labels().join(",")).map_err(io_error)?;
            writeln!(out, "symmetry residual: {}", g12(d.symmetry_residual)).map_err(io_error)?;
            writeln!(out, "symplectic eigenvalues: {}", nus.join(" ")).map_err(io_error)?;
            writeln!(out, "minimum symplectic eigenvalue: {}", g12(d.min_symplectic_eigenvalue)).map_err(io_error)?;
            writeln!(out, "purity: {}", g12(d.purity)).map_err(io_error)?;
            writeln!(out, "{}", if d.physical { "physical" } else { "UNPHYSICAL" }).map_err(io_error)?;
        }
    }
    out.flush().map_err(io_error)?;
    if d.physical {
        Ok(())
    } else {
        Err(CliError::Unphysical(format!(
            "minimum symplectic eigenvalue {} is below 1/2",
            g12(d.min_symplectic_eigenvalue)
        )))
    }
}
