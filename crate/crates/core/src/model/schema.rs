//! JSON form of a model. Matrices are row-major nested arrays.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    build_conditional_pmc, BuildPolicy, ConditionalPmcModel, F2Policy, H2Policy, JumpChain, PmcBlocks, RegimeParams,
};
use crate::error::{Error, Result};

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainDocument {
    pub initial: Vec<f64>,
    pub trans: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeDocument {
    #[serde(rename = "F")]
    pub f: Rows,
    #[serde(rename = "H")]
    pub h: Rows,
    #[serde(rename = "Q")]
    pub q: Rows,
    #[serde(rename = "R")]
    pub r: Rows,
    pub m0: Vec<f64>,
    #[serde(rename = "P0")]
    pub p0: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlocksDocument {
    #[serde(rename = "F1")]
    pub f1: Rows,
    #[serde(rename = "F2")]
    pub f2: Rows,
    #[serde(rename = "H1")]
    pub h1: Rows,
    #[serde(rename = "H2")]
    pub h2: Rows,
    #[serde(rename = "S11")]
    pub s11: Rows,
    #[serde(rename = "S21")]
    pub s21: Rows,
    #[serde(rename = "S22")]
    pub s22: Rows,
}

/// One side of a build policy, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PolicySpec {
    Zero,
    /// `[from][to]` table of matrices.
    Explicit { matrices: Vec<Vec<Rows>> },
    SolveConstraint,
    KldOptimal,
    /// `alpha` times the current regime's `F` (for `F2`) or `H` (for `H2`).
    Scaled { alpha: f64 },
    /// `alpha` times the solved `H2`.
    ScaledSolveConstraint { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDocument {
    pub f2: PolicySpec,
    pub h2: PolicySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct ModelDocument {
    pub chain: ChainDocument,
    pub regimes: Vec<RegimeDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyDocument>,
    /// Explicit `K x K` block table; takes precedence over `policy`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<Vec<BlocksDocument>>>,
    #[serde(default = "yes")]
    pub time_invariant: bool,
}

fn yes() -> bool {
    true
}

fn to_matrix(rows: &Rows, what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidModel(format!("{what}: rows have unequal lengths")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidModel(format!("{what}: non-finite entry")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn to_rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl PolicySpec {
    fn table(matrices: &[Vec<Rows>], what: &str) -> Result<Vec<Vec<DMatrix<f64>>>> {
        matrices
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, m)| to_matrix(m, &format!("{what}[{i}][{j}]")))
                    .collect()
            })
            .collect()
    }

    fn into_f2(self) -> Result<F2Policy> {
        Ok(match self {
            PolicySpec::Zero => F2Policy::Zero,
            PolicySpec::Explicit { matrices } => F2Policy::Explicit(Self::table(&matrices, "policy.f2")?),
            PolicySpec::KldOptimal => F2Policy::KldOptimal,
            PolicySpec::Scaled { alpha } => F2Policy::ScaledF(alpha),
            PolicySpec::SolveConstraint | PolicySpec::ScaledSolveConstraint { .. } => {
                return Err(Error::InvalidModel("policy.f2: solve-constraint applies to h2 only".into()))
            }
        })
    }

    fn into_h2(self) -> Result<H2Policy> {
        Ok(match self {
            PolicySpec::Zero => H2Policy::Zero,
            PolicySpec::Explicit { matrices } => H2Policy::Explicit(Self::table(&matrices, "policy.h2")?),
            PolicySpec::SolveConstraint => H2Policy::SolveConstraint,
            PolicySpec::Scaled { alpha } => H2Policy::ScaledH(alpha),
            PolicySpec::ScaledSolveConstraint { alpha } => H2Policy::ScaledConstraint(alpha),
            PolicySpec::KldOptimal => {
                return Err(Error::InvalidModel("policy.h2: kld-optimal applies to f2 only".into()))
            }
        })
    }

    fn explicit(t: &[Vec<DMatrix<f64>>]) -> Self {
        PolicySpec::Explicit {
            matrices: t.iter().map(|row| row.iter().map(to_rows).collect()).collect(),
        }
    }
}

impl PolicyDocument {
    pub fn into_policy(self) -> Result<BuildPolicy> {
        Ok(BuildPolicy {
            f2: self.f2.into_f2()?,
            h2: self.h2.into_h2()?,
        })
    }

    pub fn from_policy(p: &BuildPolicy) -> Self {
        let f2 = match &p.f2 {
            F2Policy::Zero => PolicySpec::Zero,
            F2Policy::Explicit(t) => PolicySpec::explicit(t),
            F2Policy::KldOptimal => PolicySpec::KldOptimal,
            F2Policy::ScaledF(alpha) => PolicySpec::Scaled { alpha: *alpha },
        };
        let h2 = match &p.h2 {
            H2Policy::Zero => PolicySpec::Zero,
            H2Policy::Explicit(t) => PolicySpec::explicit(t),
            H2Policy::SolveConstraint => PolicySpec::SolveConstraint,
            H2Policy::ScaledH(alpha) => PolicySpec::Scaled { alpha: *alpha },
            H2Policy::ScaledConstraint(alpha) => PolicySpec::ScaledSolveConstraint { alpha: *alpha },
        };
        Self { f2, h2 }
    }
}

impl RegimeDocument {
    fn into_params(self, r: usize) -> Result<RegimeParams> {
        let ctx = |n: &str| format!("regimes[{r}].{n}");
        RegimeParams::new(
            to_matrix(&self.f, &ctx("F"))?,
            to_matrix(&self.h, &ctx("H"))?,
            to_matrix(&self.q, &ctx("Q"))?,
            to_matrix(&self.r, &ctx("R"))?,
            DVector::from_vec(self.m0),
            to_matrix(&self.p0, &ctx("P0"))?,
        )
    }

    fn from_params(p: &RegimeParams) -> Self {
        Self {
            f: to_rows(&p.f),
            h: to_rows(&p.h),
            q: to_rows(&p.q),
            r: to_rows(&p.r),
            m0: p.m0.iter().copied().collect(),
            p0: to_rows(&p.p0),
        }
    }
}

impl BlocksDocument {
    fn into_blocks(self, i: usize, j: usize) -> Result<PmcBlocks> {
        let ctx = |n: &str| format!("blocks[{i}][{j}].{n}");
        Ok(PmcBlocks {
            f1: to_matrix(&self.f1, &ctx("F1"))?,
            f2: to_matrix(&self.f2, &ctx("F2"))?,
            h1: to_matrix(&self.h1, &ctx("H1"))?,
            h2: to_matrix(&self.h2, &ctx("H2"))?,
            s11: to_matrix(&self.s11, &ctx("S11"))?,
            s21: to_matrix(&self.s21, &ctx("S21"))?,
            s22: to_matrix(&self.s22, &ctx("S22"))?,
        })
    }

    fn from_blocks(b: &PmcBlocks) -> Self {
        Self {
            f1: to_rows(&b.f1),
            f2: to_rows(&b.f2),
            h1: to_rows(&b.h1),
            h2: to_rows(&b.h2),
            s11: to_rows(&b.s11),
            s21: to_rows(&b.s21),
            s22: to_rows(&b.s22),
        }
    }
}

impl ModelDocument {
    /// Builds the model. Explicit blocks are loaded as given (checked by
    /// [`super::validate_model`]); otherwise they are built from `policy`,
    /// defaulting to the jump Markov state-space embedding.
    pub fn into_model(self) -> Result<ConditionalPmcModel> {
        if !self.time_invariant {
            return Err(Error::InvalidModel("only time-invariant models are supported".into()));
        }
        let k = self.chain.initial.len();
        let trans = to_matrix(&self.chain.trans, "chain.trans")?;
        if trans.nrows() != k {
            return Err(Error::InvalidChain(format!(
                "chain.trans has {} rows for {k} regimes",
                trans.nrows()
            )));
        }
        let chain = JumpChain::new(self.chain.initial, trans)?;
        let regimes = self
            .regimes
            .into_iter()
            .enumerate()
            .map(|(r, d)| d.into_params(r))
            .collect::<Result<Vec<_>>>()?;
        let policy = self.policy.map(PolicyDocument::into_policy).transpose()?;
        match self.blocks {
            Some(table) => {
                let blocks = table
                    .into_iter()
                    .enumerate()
                    .map(|(i, row)| {
                        row.into_iter()
                            .enumerate()
                            .map(|(j, b)| b.into_blocks(i, j))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                ConditionalPmcModel::from_parts(chain, regimes, blocks, policy)
            }
            None => build_conditional_pmc(chain, regimes, policy.unwrap_or_else(BuildPolicy::jmss)),
        }
    }

    /// Full document including the block table.
    pub fn from_model(model: &ConditionalPmcModel) -> Self {
        let chain = ChainDocument {
            initial: model.chain().initial().to_vec(),
            trans: to_rows(model.chain().trans()),
        };
        Self {
            chain,
            regimes: model.regimes().iter().map(RegimeDocument::from_params).collect(),
            policy: model.policy().map(PolicyDocument::from_policy),
            blocks: Some(
                model
                    .block_table()
                    .iter()
                    .map(|row| row.iter().map(BlocksDocument::from_blocks).collect())
                    .collect(),
            ),
            time_invariant: true,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl ConditionalPmcModel {
    pub fn from_json(text: &str) -> Result<Self> {
        ModelDocument::from_json(text)?.into_model()
    }

    pub fn to_json(&self) -> Result<String> {
        ModelDocument::from_model(self).to_json()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
