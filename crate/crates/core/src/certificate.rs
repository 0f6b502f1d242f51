//! Serializable construction outputs with everything needed to re-check them.

use serde::{Deserialize, Serialize};

use crate::defect::{is_m_isometric, DefectReport};
use crate::error::Result;
use crate::opcore::{check_dilation, check_lifting, EmbeddingMap, Operator, Relation, RelationReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    WeightedShiftLifting,
    BilateralShiftDilation,
    ConvexTower,
    ConvexLmiLifting,
    SchafferLifting,
    FoguelHankelLifting,
    UnitaryExtensionDilation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cmp {
    Le,
    Ge,
}

/// One named scalar check: `value` compared against `bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub cmp: Cmp,
    pub pass: bool,
}

impl Check {
    pub fn le(name: &str, value: f64, bound: f64) -> Check {
        Check {
            name: name.into(),
            value,
            bound,
            cmp: Cmp::Le,
            pass: value <= bound,
        }
    }

    pub fn ge(name: &str, value: f64, bound: f64) -> Check {
        Check {
            name: name.into(),
            value,
            bound,
            cmp: Cmp::Ge,
            pass: value >= bound,
        }
    }

    pub fn flag(name: &str, ok: bool) -> Check {
        Check::ge(name, if ok { 1.0 } else { 0.0 }, 1.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LiftingCertificate {
    pub schema: u32,
    pub provenance: Provenance,
    pub t: Operator,
    pub s: Operator,
    pub w: EmbeddingMap,
    pub defect: Option<DefectReport>,
    pub relations: Vec<RelationReport>,
    pub checks: Vec<Check>,
    pub params: serde_json::Value,
}

impl LiftingCertificate {
    pub fn verdict(&self) -> bool {
        self.defect.as_ref().is_none_or(|d| d.verdict)
            && self.relations.iter().all(|r| r.verdict)
            && self.checks.iter().all(|c| c.pass)
    }

    pub fn relation(&self, which: Relation) -> Option<&RelationReport> {
        self.relations.iter().find(|r| r.relation == which)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Recompute the defect and relation reports from the stored operators
    /// and embedding alone.
    pub fn revalidate(&self) -> Result<Revalidation> {
        let defect = match &self.defect {
            Some(d) => Some(is_m_isometric(&self.s, d.order, d.tol)?),
            None => None,
        };
        let relations = self
            .relations
            .iter()
            .map(|r| match r.relation {
                Relation::Dilation => check_dilation(&self.s, &self.t, &self.w, r.max_power, r.tol),
                _ => check_lifting(&self.s, &self.t, &self.w, r.tol),
            })
            .collect::<Result<Vec<_>>>()?;
        let mut max_gap: f64 = 0.0;
        if let (Some(a), Some(b)) = (&self.defect, &defect) {
            max_gap = max_gap.max((a.defect_norm_interior - b.defect_norm_interior).abs());
        }
        for (a, b) in self.relations.iter().zip(&relations) {
            for (x, y) in a.residuals.iter().zip(&b.residuals) {
                max_gap = max_gap.max((x - y).abs());
            }
        }
        let verdict = defect.as_ref().is_none_or(|d| d.verdict) && relations.iter().all(|r| r.verdict);
        Ok(Revalidation {
            defect,
            relations,
            max_gap,
            verdict,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Revalidation {
    pub defect: Option<DefectReport>,
    pub relations: Vec<RelationReport>,
    /// Largest difference between stored and recomputed residuals.
    pub max_gap: f64,
    pub verdict: bool,
}
