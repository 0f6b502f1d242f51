//! JSON forms of matrices, operators and embeddings.
//!
//! Operator documents look like
//! `{"kind": "dense", "re": [[..]], "im": [[..]]}`,
//! `{"kind": "unilateral_shift", "weights": [..], "trunc": N, "multiplicity": k}`,
//! `{"kind": "bilateral_shift", ...}`,
//! `{"kind": "block", "blocks": [[op, null], [op, op]]}` or
//! `{"kind": "sparse", "rows": r, "cols": c, "entries": [[i, j, re, im], ..]}`.
//! Shifts may carry a `"closure": {"feed": matrix, "tail": matrix}` and dense,
//! sparse and block operators an optional per-coordinate `"budget"` list.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{IsolabError, Result};
use crate::numerics::{c64, CMatrix, SparseMatrix};
use crate::opcore::{
    attach_closure, block_operator, make_weighted_shift, Closure, EmbeddingMap, Mat, Operator,
    ShiftKind, Structure,
};

/// Schema version stamped on every emitted document.
pub const SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

impl From<&CMatrix> for MatrixJson {
    fn from(a: &CMatrix) -> Self {
        let re = (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)].re).collect()).collect();
        let has_im = a.iter().any(|z| z.im != 0.0);
        let im = has_im.then(|| {
            (0..a.nrows())
                .map(|i| (0..a.ncols()).map(|j| a[(i, j)].im).collect())
                .collect()
        });
        MatrixJson { re, im }
    }
}

impl MatrixJson {
    pub fn to_matrix(&self) -> Result<CMatrix> {
        let rows = self.re.len();
        let cols = self.re.first().map_or(0, |r| r.len());
        if self.re.iter().any(|r| r.len() != cols) {
            return Err(IsolabError::Dimension("ragged \"re\" rows".into()));
        }
        if let Some(im) = &self.im {
            if im.len() != rows || im.iter().any(|r| r.len() != cols) {
                return Err(IsolabError::Dimension("\"im\" shape differs from \"re\"".into()));
            }
        }
        let a = CMatrix::from_fn(rows, cols, |i, j| {
            c64(self.re[i][j], self.im.as_ref().map_or(0.0, |im| im[i][j]))
        });
        crate::numerics::validate(&a)?;
        Ok(a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosureJson {
    pub feed: MatrixJson,
    pub tail: MatrixJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorJson {
    Dense {
        #[serde(flatten)]
        matrix: MatrixJson,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        budget: Option<Vec<usize>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        compression_exact: Option<bool>,
    },
    UnilateralShift {
        weights: Vec<f64>,
        trunc: usize,
        multiplicity: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        closure: Option<ClosureJson>,
    },
    BilateralShift {
        weights: Vec<f64>,
        trunc: usize,
        multiplicity: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        closure: Option<ClosureJson>,
    },
    Block {
        blocks: Vec<Vec<Option<OperatorJson>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        budget: Option<Vec<usize>>,
    },
    Sparse {
        rows: usize,
        cols: usize,
        entries: Vec<(usize, usize, f64, f64)>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        budget: Option<Vec<usize>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        compression_exact: Option<bool>,
    },
}

impl From<&Operator> for OperatorJson {
    fn from(op: &Operator) -> Self {
        if let Structure::Shift {
            kind,
            weights,
            trunc,
            multiplicity,
            closure,
        } = &op.structure
        {
            let closure = closure.as_ref().map(|c| ClosureJson {
                feed: (&c.feed).into(),
                tail: (&c.tail).into(),
            });
            let (weights, trunc, multiplicity) = (weights.clone(), *trunc, *multiplicity);
            return match kind {
                ShiftKind::Unilateral => OperatorJson::UnilateralShift {
                    weights,
                    trunc,
                    multiplicity,
                    closure,
                },
                ShiftKind::Bilateral => OperatorJson::BilateralShift {
                    weights,
                    trunc,
                    multiplicity,
                    closure,
                },
            };
        }
        let exact = op.budgets.as_ref().map(|_| op.compression_exact);
        match &op.mat {
            Mat::Dense(a) => OperatorJson::Dense {
                matrix: a.into(),
                budget: op.budgets.clone(),
                compression_exact: exact,
            },
            Mat::Sparse(a) => OperatorJson::Sparse {
                rows: a.nrows(),
                cols: a.ncols(),
                entries: a.triplets().map(|(i, j, v)| (i, j, v.re, v.im)).collect(),
                budget: op.budgets.clone(),
                compression_exact: exact,
            },
        }
    }
}

fn with_budget(mut op: Operator, budget: Option<Vec<usize>>, exact: Option<bool>) -> Result<Operator> {
    if let Some(b) = budget {
        if b.len() != op.dim() {
            return Err(IsolabError::Dimension(format!(
                "budget list has {} entries for dimension {}",
                b.len(),
                op.dim()
            )));
        }
        op.budgets = Some(b);
        op.compression_exact = exact.unwrap_or(false);
    }
    Ok(op)
}

impl TryFrom<&OperatorJson> for Operator {
    type Error = IsolabError;

    fn try_from(j: &OperatorJson) -> Result<Operator> {
        match j {
            OperatorJson::Dense {
                matrix,
                budget,
                compression_exact,
            } => with_budget(Operator::dense(matrix.to_matrix()?)?, budget.clone(), *compression_exact),
            OperatorJson::UnilateralShift {
                weights,
                trunc,
                multiplicity,
                closure,
            }
            | OperatorJson::BilateralShift {
                weights,
                trunc,
                multiplicity,
                closure,
            } => {
                let kind = if matches!(j, OperatorJson::UnilateralShift { .. }) {
                    ShiftKind::Unilateral
                } else {
                    ShiftKind::Bilateral
                };
                let s = make_weighted_shift(weights, *trunc, *multiplicity, kind)?;
                match closure {
                    None => Ok(s),
                    Some(c) => attach_closure(
                        &s,
                        Closure {
                            feed: c.feed.to_matrix()?,
                            tail: c.tail.to_matrix()?,
                        },
                    ),
                }
            }
            OperatorJson::Block { blocks, budget } => {
                let grid = blocks
                    .iter()
                    .map(|row| {
                        row.iter()
                            .map(|b| b.as_ref().map(Operator::try_from).transpose())
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                with_budget(block_operator(&grid)?, budget.clone(), None)
            }
            OperatorJson::Sparse {
                rows,
                cols,
                entries,
                budget,
                compression_exact,
            } => {
                if let Some(&(i, jj, _, _)) = entries.iter().find(|e| e.0 >= *rows || e.1 >= *cols) {
                    return Err(IsolabError::Dimension(format!(
                        "sparse entry ({i},{jj}) outside {rows}x{cols}"
                    )));
                }
                let m = SparseMatrix::from_triplets(
                    *rows,
                    *cols,
                    entries.iter().map(|&(i, jj, re, im)| (i, jj, c64(re, im))),
                );
                let mut op = Operator::from_mat(Mat::Sparse(m), Structure::Dense, None)?;
                op.compression_exact = true;
                with_budget(op, budget.clone(), *compression_exact)
            }
        }
    }
}

impl Serialize for Operator {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        OperatorJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Operator {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = OperatorJson::deserialize(d)?;
        Operator::try_from(&j).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct EmbeddingJson {
    map: MatrixJson,
    iso_residual: f64,
    intertwine_residual: f64,
}

impl Serialize for EmbeddingMap {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        EmbeddingJson {
            map: (&self.map).into(),
            iso_residual: self.iso_residual,
            intertwine_residual: self.intertwine_residual,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for EmbeddingMap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = EmbeddingJson::deserialize(d)?;
        let map = j.map.to_matrix().map_err(serde::de::Error::custom)?;
        Ok(EmbeddingMap {
            map,
            iso_residual: j.iso_residual,
            intertwine_residual: j.intertwine_residual,
        })
    }
}

/// serde adapter for bare matrices inside report structs.
pub mod matrix {
    use super::*;

    pub fn serialize<S: Serializer>(a: &CMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson::from(a).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<CMatrix, D::Error> {
        MatrixJson::deserialize(d)?.to_matrix().map_err(serde::de::Error::custom)
    }
}

/// serde adapter for optional matrices.
pub mod opt_matrix {
    use super::*;

    pub fn serialize<S: Serializer>(a: &Option<CMatrix>, s: S) -> std::result::Result<S::Ok, S::Error> {
        a.as_ref().map(MatrixJson::from).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<CMatrix>, D::Error> {
        Option::<MatrixJson>::deserialize(d)?
            .map(|m| m.to_matrix())
            .transpose()
            .map_err(serde::de::Error::custom)
    }
}

pub fn operator_from_str(s: &str) -> Result<Operator> {
    let j: OperatorJson = serde_json::from_str(s)?;
    Operator::try_from(&j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{from_real_rows, max_abs};

    #[test]
    fn dense_roundtrip() {
        let mut a = from_real_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        a[(0, 1)].im = -0.5;
        let op = Operator::dense(a.clone()).unwrap();
        let text = serde_json::to_string(&op).unwrap();
        let back: Operator = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_dense(), a);
        assert!(text.contains("\"kind\":\"dense\""));
    }

    #[test]
    fn shift_with_closure_roundtrip() {
        let s = make_weighted_shift(&[2.0, 1.5, 1.2], 3, 2, ShiftKind::Unilateral).unwrap();
        let s = attach_closure(
            &s,
            Closure {
                feed: from_real_rows(&[&[0.1, 0.0], &[0.0, 0.2]]),
                tail: from_real_rows(&[&[0.5, 0.1], &[0.0, 0.5]]),
            },
        )
        .unwrap();
        let back: Operator = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn block_and_sparse_documents() {
        let doc = r#"{"kind":"block","blocks":[
            [{"kind":"dense","re":[[0.5]]},{"kind":"dense","re":[[1.0]]}],
            [null,{"kind":"dense","re":[[0.5]]}]]}"#;
        let op = operator_from_str(doc).unwrap();
        assert!(max_abs(&(op.to_dense() - from_real_rows(&[&[0.5, 1.0], &[0.0, 0.5]]))) == 0.0);
        let doc = r#"{"kind":"sparse","rows":2,"cols":2,"entries":[[1,0,1.0,0.0]],"budget":[1,0]}"#;
        let op = operator_from_str(doc).unwrap();
        assert_eq!(op.budget_vec(), vec![1, 0]);
        assert!(!op.compression_exact);
    }

    #[test]
    fn invalid_documents() {
        assert!(operator_from_str(r#"{"kind":"dense","re":[[1.0,2.0]]}"#).is_err());
        assert!(operator_from_str(r#"{"kind":"dense","re":[[1.0],[2.0,3.0]]}"#).is_err());
        assert!(operator_from_str(r#"{"kind":"unilateral_shift","weights":[1.0,0.0],"trunc":2,"multiplicity":1}"#).is_err());
        assert!(operator_from_str(r#"{"kind":"block","blocks":[[null]]}"#).is_err());
        assert!(operator_from_str(r#"{"kind":"mystery"}"#).is_err());
    }
}
