//! Report records emitted by every CLI command.
//!
//! Reports are JSON with a fixed field order; identical inputs and
//! configuration produce byte-identical files once the timing block is
//! cleared, which the determinism checks rely on.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::linalg::Inertia;
use crate::releq::{RelativeEquilibrium, ReleqVerification};
use crate::rpo::{Family, OrbitSignature, RelPeriodicOrbit};
use crate::slice::{GaugeSearch, SliceData};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Report {
    pub command: String,
    pub system: String,
    pub tolerances: Tolerances,
    pub results: ReportResults,
    pub pass: bool,
    pub warnings: Vec<String>,
    pub timings: Timings,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct Timings {
    pub total_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ReportResults {
    Verify {
        invariant: bool,
        witness: Option<String>,
        identities: Vec<IdentityCheck>,
    },
    Releq {
        releq: ReleqRecord,
    },
    SliceReport {
        slice: SliceRecord,
    },
    Rpo {
        orbit: OrbitRecord,
    },
    Continue {
        family: FamilyRecord,
    },
    CountFamilies {
        count: usize,
        expected: usize,
        deficient: bool,
        certificates: Vec<CertificateRecord>,
        failed_modes: Vec<usize>,
    },
    Plot {
        svg_path: String,
        points: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IdentityCheck {
    pub name: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReleqRecord {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub mu: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub isotropy_dim: usize,
    /// Columns of the isotropy-algebra basis.
    pub isotropy_basis: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationRecord>,
}

impl ReleqRecord {
    pub fn new(re: &RelativeEquilibrium<f64>, verification: Option<VerificationRecord>) -> Self {
        Self {
            x: re.x.iter().copied().collect(),
            xi: re.xi.iter().copied().collect(),
            mu: re.mu.iter().copied().collect(),
            residual: re.residual,
            iterations: re.iterations,
            isotropy_dim: re.isotropy.dim(),
            isotropy_basis: matrix_columns(re.isotropy.basis()),
            verification,
        }
    }

    pub fn x_vector(&self) -> DVector<f64> {
        DVector::from_vec(self.x.clone())
    }

    pub fn xi_vector(&self) -> DVector<f64> {
        DVector::from_vec(self.xi.clone())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VerificationRecord {
    /// `(dt, max deviation)` pairs.
    pub deviations: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<f64>,
    pub pass: bool,
    pub deviation_tol: f64,
}

impl VerificationRecord {
    pub fn new(v: &ReleqVerification<f64>) -> Self {
        Self {
            deviations: v.deviations.clone(),
            order: v.order,
            pass: v.pass,
            deviation_tol: v.deviation_tol,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SliceRecord {
    pub kernel_dim: usize,
    pub orbit_dim: usize,
    pub dim: usize,
    /// Columns of the slice basis in phase-space coordinates.
    pub basis: Vec<Vec<f64>>,
    pub omega: Vec<Vec<f64>>,
    pub hessian: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub inertia: Inertia,
    pub positive_definite: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gauge: Option<GaugeRecord>,
}

impl SliceRecord {
    pub fn new(data: &SliceData<f64>, gauge: Option<GaugeRecord>) -> Self {
        Self {
            kernel_dim: data.geometry.kernel_dim,
            orbit_dim: data.geometry.orbit_dim,
            dim: data.geometry.dim(),
            basis: matrix_columns(&data.geometry.basis),
            omega: matrix_rows(&data.geometry.omega),
            hessian: matrix_rows(&data.hessian.matrix),
            eigenvalues: data.hessian.eigenvalues.iter().copied().collect(),
            inertia: data.hessian.inertia,
            positive_definite: data.hessian.inertia.is_positive_definite(),
            gauge,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GaugeRecord {
    pub xi: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub lambda_min: f64,
    pub definite: bool,
    pub evaluations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl GaugeRecord {
    pub fn new(g: &GaugeSearch<f64>) -> Self {
        Self {
            xi: g.xi.iter().copied().collect(),
            coefficients: g.coefficients.iter().copied().collect(),
            lambda_min: g.lambda_min,
            definite: g.definite,
            evaluations: g.evaluations,
            message: (!g.definite).then(|| "no definite gauge found".to_string()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OrbitRecord {
    pub mode: usize,
    pub eps: f64,
    pub period: f64,
    pub theta: Vec<f64>,
    pub z0: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

impl OrbitRecord {
    pub fn new(o: &RelPeriodicOrbit<f64>) -> Self {
        Self {
            mode: o.mode,
            eps: o.eps,
            period: o.period,
            theta: o.theta.iter().copied().collect(),
            z0: o.z0.iter().copied().collect(),
            residual: o.residual,
            iterations: o.iterations,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FamilyRecord {
    pub mode: usize,
    pub anchor_x: Vec<f64>,
    pub anchor_xi: Vec<f64>,
    pub orbits: Vec<OrbitRecord>,
    pub continuous: bool,
}

impl FamilyRecord {
    pub fn new(f: &Family<f64>) -> Self {
        Self {
            mode: f.mode,
            anchor_x: f.anchor_x.iter().copied().collect(),
            anchor_xi: f.anchor_xi.iter().copied().collect(),
            orbits: f.orbits.iter().map(OrbitRecord::new).collect(),
            continuous: f.is_continuous(1.0),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CertificateRecord {
    pub orbit: OrbitRecord,
    pub signature: SignatureRecord,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SignatureRecord {
    pub period: f64,
    pub energy: f64,
    pub momentum: Vec<f64>,
    pub mean_actions: Vec<f64>,
}

impl SignatureRecord {
    pub fn new(s: &OrbitSignature<f64>) -> Self {
        Self {
            period: s.period,
            energy: s.energy,
            momentum: s.momentum.clone(),
            mean_actions: s.mean_actions.clone(),
        }
    }
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Copy with the timing block cleared, the form compared for
    /// determinism.
    pub fn without_timings(&self) -> Self {
        Self { timings: Timings::default(), ..self.clone() }
    }
}

fn matrix_columns(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.ncols()).map(|c| m.column(c).iter().copied().collect()).collect()
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_roundtrip_and_determinism_form() {
        let report = Report {
            command: "verify osc11a".into(),
            system: "osc11a".into(),
            tolerances: Tolerances::default(),
            results: ReportResults::Verify {
                invariant: true,
                witness: None,
                identities: vec![IdentityCheck { name: "moment-field".into(), pass: true }],
            },
            pass: true,
            warnings: vec![],
            timings: Timings { total_ms: 12.5 },
        };
        let json = report.to_json();
        let back = Report::parse(&json).unwrap();
        assert_eq!(report, back);

        let mut other = report.clone();
        other.timings.total_ms = 99.0;
        assert_ne!(report.to_json(), other.to_json());
        assert_eq!(
            report.without_timings().to_json(),
            other.without_timings().to_json()
        );
    }
}
