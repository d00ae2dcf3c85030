//! Result rows and their CSV encoding.

use std::io::Write;

use aniso_hybrid::ModelKind;

/// Column names of `results.csv`, in order.
pub const COLUMNS: [&str; 18] = [
    "study",
    "model",
    "nx",
    "nz",
    "iota",
    "eps_iota",
    "eps_min",
    "eps_max",
    "rows",
    "nnz",
    "cond_estimate",
    "cond1_estimate",
    "rel_l2",
    "rel_h1",
    "assemble_s",
    "factor_s",
    "solve_s",
    "status",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// The solve returned, but its residual or conditioning says the field
    /// cannot be trusted.
    Breakdown,
    Failed,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Breakdown => "breakdown",
            Status::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub study: &'static str,
    pub model: ModelKind,
    pub nx: usize,
    pub nz: usize,
    pub iota: Option<usize>,
    pub eps_iota: Option<f64>,
    pub eps_min: f64,
    pub eps_max: f64,
    pub rows: Option<usize>,
    pub nnz: Option<usize>,
    pub cond_estimate: Option<f64>,
    pub cond1_estimate: Option<f64>,
    pub rel_l2: Option<f64>,
    pub rel_h1: Option<f64>,
    pub assemble_s: Option<f64>,
    pub factor_s: Option<f64>,
    pub solve_s: Option<f64>,
    pub status: Status,
    /// A failed or broken-down solve of this row fails the run.
    pub required: bool,
    pub message: Option<String>,
}

impl ResultRow {
    pub fn new(study: &'static str, model: ModelKind, nx: usize, nz: usize, eps_min: f64, eps_max: f64) -> Self {
        Self {
            study,
            model,
            nx,
            nz,
            iota: None,
            eps_iota: None,
            eps_min,
            eps_max,
            rows: None,
            nnz: None,
            cond_estimate: None,
            cond1_estimate: None,
            rel_l2: None,
            rel_h1: None,
            assemble_s: None,
            factor_s: None,
            solve_s: None,
            status: Status::Ok,
            required: true,
            message: None,
        }
    }

    pub fn fail(mut self, message: String) -> Self {
        self.status = Status::Failed;
        self.message = Some(message);
        self
    }

    pub fn is_required_failure(&self) -> bool {
        self.required && self.status != Status::Ok
    }

    fn record(&self) -> Vec<String> {
        let failed = self.status == Status::Failed;
        let real = |v: Option<f64>| match v {
            Some(x) if x.is_finite() => sci(x),
            Some(_) => "failed".to_string(),
            None if failed => "failed".to_string(),
            None => String::new(),
        };
        let int = |v: Option<usize>| v.map(|n| n.to_string()).unwrap_or_default();
        vec![
            self.study.to_string(),
            self.model.as_str().to_string(),
            self.nx.to_string(),
            self.nz.to_string(),
            int(self.iota),
            self.eps_iota.map(sci).unwrap_or_default(),
            sci(self.eps_min),
            sci(self.eps_max),
            int(self.rows),
            int(self.nnz),
            real(self.cond_estimate),
            real(self.cond1_estimate),
            real(self.rel_l2),
            real(self.rel_h1),
            real(self.assemble_s),
            real(self.factor_s),
            real(self.solve_s),
            self.status.as_str().to_string(),
        ]
    }
}

/// Scientific notation with ten significant digits.
pub fn sci(x: f64) -> String {
    format!("{x:.9e}")
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}
