//! Certificates: the JSON output format of the `cpdilate` tool.
//!
//! A certificate records the command, a SHA-256 echo of the canonical
//! instance, the shape context, every produced operator matrix, a residual
//! table, and verdicts. Serialization is canonical (see [`crate::instance`]),
//! so identical runs produce byte-identical certificates.
//!
//! [`verify_certificate`] recomputes every entry of the residual table from
//! the embedded matrices alone — no dilation or derivative is re-run from
//! the instance — and must reproduce each value within `1e-12`.

use crate::algebra::CStarAlgebra;
use crate::cpmatrix::{ModuleCPMatrix, NPositiveMatrixMap};
use crate::error::{CpError, Result};
use crate::flag::FlagSpace;
use crate::instance::{
    canonical_json, float_value, get_f64, get_obj, get_usize, get_usize_list, parse_matrix,
    schema_err, InstanceFile, MatrixData,
};
use crate::ksgns::{dilation_gram, StinespringData};
use crate::linalg::{herm_eig, CMatrix, Tolerances};
use crate::module::{HilbertModule, ModuleKind};
use crate::radon_nikodym::{
    commutant_closure_residual, deform, domination_form_min_eigenvalue,
    domination_witness_element, form_distance, t_determines_n_residual, CommutantElement,
};
use serde_json::Value;
use std::collections::BTreeMap;
use std::sync::Arc;

pub const CERTIFICATE_VERSION: &str = "cpdilate-cert/1";

/// Shape data every certificate carries so the verifier can rebuild maps
/// and representations from the embedded matrices.
#[derive(Debug, Clone)]
pub struct ShapeContext {
    pub block_dims: Vec<usize>,
    pub chain: Vec<Vec<usize>>,
    pub module_kind: ModuleKind,
    pub flag_h: Vec<usize>,
    pub flag_k: Vec<usize>,
    pub n: usize,
}

impl ShapeContext {
    pub fn from_instance(inst: &InstanceFile) -> Self {
        ShapeContext {
            block_dims: inst.block_dims.clone(),
            chain: inst.chain.clone(),
            module_kind: inst.module_kind.clone(),
            flag_h: inst.flag_h.clone(),
            flag_k: inst.flag_k.clone(),
            n: inst.n,
        }
    }

    pub fn algebra(&self) -> Result<Arc<CStarAlgebra>> {
        Ok(Arc::new(CStarAlgebra::new(
            self.block_dims.clone(),
            self.chain.clone(),
        )?))
    }

    pub fn module(&self) -> Result<Arc<HilbertModule>> {
        HilbertModule::new(self.algebra()?, self.module_kind.clone())
    }

    pub fn space_h(&self) -> Result<FlagSpace> {
        FlagSpace::new(self.flag_h.clone())
    }

    pub fn space_k(&self) -> Result<FlagSpace> {
        FlagSpace::new(self.flag_k.clone())
    }

    fn store(&self, ctx: &mut BTreeMap<String, Value>) {
        let ints = |v: &[usize]| Value::Array(v.iter().map(|&x| Value::from(x as u64)).collect());
        ctx.insert("block_dims".into(), ints(&self.block_dims));
        ctx.insert(
            "chain".into(),
            Value::Array(self.chain.iter().map(|l| ints(l)).collect()),
        );
        match &self.module_kind {
            ModuleKind::SelfModule => {
                ctx.insert("module_kind".into(), Value::String("self".into()));
            }
            ModuleKind::Free(p) => {
                ctx.insert("module_kind".into(), Value::String("free".into()));
                ctx.insert("module_rank".into(), Value::from(*p as u64));
            }
            ModuleKind::Rect(rows) => {
                ctx.insert("module_kind".into(), Value::String("rect".into()));
                ctx.insert("module_row_dims".into(), ints(rows));
            }
        }
        ctx.insert("flag_h".into(), ints(&self.flag_h));
        ctx.insert("flag_k".into(), ints(&self.flag_k));
        ctx.insert("n".into(), Value::from(self.n as u64));
    }

    fn load(ctx: &BTreeMap<String, Value>) -> Result<Self> {
        let field = |k: &str| -> Result<&Value> {
            ctx.get(k)
                .ok_or(())
                .or_else(|_| schema_err(&format!("$.context.{k}"), "missing field"))
        };
        let block_dims = get_usize_list(field("block_dims")?, "$.context.block_dims")?;
        let chain_v = field("chain")?
            .as_array()
            .ok_or(())
            .or_else(|_| schema_err::<&Vec<Value>>("$.context.chain", "expected array"))?;
        let chain = chain_v
            .iter()
            .enumerate()
            .map(|(i, l)| get_usize_list(l, &format!("$.context.chain[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let module_kind = match field("module_kind")?.as_str() {
            Some("self") => ModuleKind::SelfModule,
            Some("free") => {
                ModuleKind::Free(get_usize(field("module_rank")?, "$.context.module_rank")?)
            }
            Some("rect") => ModuleKind::Rect(get_usize_list(
                field("module_row_dims")?,
                "$.context.module_row_dims",
            )?),
            _ => return schema_err("$.context.module_kind", "expected self/free/rect"),
        };
        Ok(ShapeContext {
            block_dims,
            chain,
            module_kind,
            flag_h: get_usize_list(field("flag_h")?, "$.context.flag_h")?,
            flag_k: get_usize_list(field("flag_k")?, "$.context.flag_k")?,
            n: get_usize(field("n")?, "$.context.n")?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct CertificateFile {
    pub command: String,
    pub instance_sha256: String,
    pub context: BTreeMap<String, Value>,
    pub operators: BTreeMap<String, MatrixData>,
    pub residuals: BTreeMap<String, f64>,
    pub verdicts: BTreeMap<String, String>,
}

impl CertificateFile {
    pub fn new(
        command: &str,
        instance_sha256: String,
        shape: &ShapeContext,
        tol: &Tolerances<f64>,
    ) -> Self {
        let mut context = BTreeMap::new();
        shape.store(&mut context);
        context.insert("rank_tol".into(), float_value(tol.rank_tol));
        context.insert("psd_tol".into(), float_value(tol.psd_tol));
        context.insert("residual_tol".into(), float_value(tol.residual_tol));
        CertificateFile {
            command: command.to_string(),
            instance_sha256,
            context,
            operators: BTreeMap::new(),
            residuals: BTreeMap::new(),
            verdicts: BTreeMap::new(),
        }
    }

    pub fn shape(&self) -> Result<ShapeContext> {
        ShapeContext::load(&self.context)
    }

    pub fn tolerances(&self) -> Result<Tolerances<f64>> {
        let field = |k: &str| -> Result<f64> {
            get_f64(
                self.context
                    .get(k)
                    .ok_or(())
                    .or_else(|_| schema_err(&format!("$.context.{k}"), "missing field"))?,
                &format!("$.context.{k}"),
            )
        };
        Tolerances::new(field("rank_tol")?, field("psd_tol")?, field("residual_tol")?)
    }

    pub fn insert_op(&mut self, name: &str, m: &CMatrix<f64>) {
        self.operators
            .insert(name.to_string(), MatrixData::from_cmatrix(m));
    }

    pub fn insert_phi_grid(&mut self, prefix: &str, phi: &NPositiveMatrixMap<f64>) {
        for i in 0..phi.n() {
            for j in 0..phi.n() {
                self.insert_op(&format!("{prefix}_{i}_{j}"), phi.entry(i, j).expect("in range"));
            }
        }
    }

    pub fn insert_pair_grids(
        &mut self,
        scalar_prefix: &str,
        module_prefix: &str,
        pair: &ModuleCPMatrix<f64>,
    ) {
        self.insert_phi_grid(scalar_prefix, pair.scalar_part());
        for i in 0..pair.n() {
            for j in 0..pair.n() {
                self.insert_op(
                    &format!("{module_prefix}_{i}_{j}"),
                    pair.entry(i, j).expect("in range"),
                );
            }
        }
    }

    pub fn insert_stine(&mut self, prefix: &str, stine: &StinespringData<f64>) {
        for (b, m) in stine.pi_phi.iter().enumerate() {
            self.insert_op(&format!("{prefix}piA_{b}"), m);
        }
        for (b, m) in stine.pi_mod.iter().enumerate() {
            self.insert_op(&format!("{prefix}piM_{b}"), m);
        }
        for (i, m) in stine.s_ops.iter().enumerate() {
            self.insert_op(&format!("{prefix}S_{i}"), m);
        }
        for (i, m) in stine.w_ops.iter().enumerate() {
            self.insert_op(&format!("{prefix}W_{i}"), m);
        }
    }

    pub fn set_residual(&mut self, name: &str, value: f64) {
        self.residuals.insert(name.to_string(), value);
    }

    pub fn set_verdict(&mut self, name: &str, value: &str) {
        self.verdicts.insert(name.to_string(), value.to_string());
    }

    fn op(&self, name: &str) -> Result<CMatrix<f64>> {
        self.operators
            .get(name)
            .ok_or_else(|| CpError::SchemaError {
                path: format!("$.operators.{name}"),
                reason: "missing operator".into(),
            })?
            .to_cmatrix()
    }

    fn grid(&self, prefix: &str, n: usize) -> Result<Vec<CMatrix<f64>>> {
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.op(&format!("{prefix}_{i}_{j}"))?);
            }
        }
        Ok(out)
    }

    fn seq(&self, prefix: &str, count: usize) -> Result<Vec<CMatrix<f64>>> {
        (0..count)
            .map(|i| self.op(&format!("{prefix}_{i}")))
            .collect()
    }

    fn rebuild_phi(&self, shape: &ShapeContext, prefix: &str) -> Result<NPositiveMatrixMap<f64>> {
        NPositiveMatrixMap::new(
            shape.n,
            shape.algebra()?,
            shape.space_h()?,
            self.grid(prefix, shape.n)?,
        )
    }

    fn rebuild_pair(
        &self,
        shape: &ShapeContext,
        scalar_prefix: &str,
        module_prefix: &str,
    ) -> Result<ModuleCPMatrix<f64>> {
        ModuleCPMatrix::new(
            shape.module()?,
            shape.space_k()?,
            self.grid(module_prefix, shape.n)?,
            self.rebuild_phi(shape, scalar_prefix)?,
        )
    }

    fn rebuild_stine(&self, shape: &ShapeContext, prefix: &str) -> Result<StinespringData<f64>> {
        let algebra = shape.algebra()?;
        let module = shape.module()?;
        let pi_phi = self.seq(&format!("{prefix}piA"), algebra.dim())?;
        let pi_mod = self.seq(&format!("{prefix}piM"), module.dim())?;
        let s_ops = self.seq(&format!("{prefix}S"), shape.n)?;
        let w_ops = self.seq(&format!("{prefix}W"), shape.n)?;
        let dim_h = s_ops[0].rows();
        let dim_k = w_ops[0].rows();
        Ok(StinespringData {
            n: shape.n,
            algebra,
            module,
            space_h: shape.space_h()?,
            space_k: shape.space_k()?,
            dim_h,
            dim_k,
            pi_phi,
            pi_mod,
            s_ops,
            w_ops,
        })
    }

    pub fn to_value(&self) -> Value {
        let mut obj = serde_json::Map::new();
        obj.insert("command".into(), Value::String(self.command.clone()));
        obj.insert(
            "context".into(),
            Value::Object(self.context.iter().map(|(k, v)| (k.clone(), v.clone())).collect()),
        );
        obj.insert(
            "instance_sha256".into(),
            Value::String(self.instance_sha256.clone()),
        );
        obj.insert(
            "operators".into(),
            Value::Object(
                self.operators
                    .iter()
                    .map(|(k, m)| (k.clone(), m.to_value()))
                    .collect(),
            ),
        );
        obj.insert(
            "residuals".into(),
            Value::Object(
                self.residuals
                    .iter()
                    .map(|(k, &v)| (k.clone(), float_value(v)))
                    .collect(),
            ),
        );
        obj.insert(
            "verdicts".into(),
            Value::Object(
                self.verdicts
                    .iter()
                    .map(|(k, v)| (k.clone(), Value::String(v.clone())))
                    .collect(),
            ),
        );
        obj.insert("version".into(), Value::String(CERTIFICATE_VERSION.into()));
        Value::Object(obj)
    }

    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        canonical_json(&self.to_value()).into_bytes()
    }

    pub fn parse(bytes: &[u8]) -> Result<CertificateFile> {
        let root: Value = serde_json::from_slice(bytes)?;
        let obj = get_obj(&root, "$")?;
        match obj.get("version").and_then(Value::as_str) {
            Some(CERTIFICATE_VERSION) => {}
            Some(other) => {
                return Err(CpError::VersionUnsupported {
                    found: other.to_string(),
                })
            }
            None => return schema_err("$.version", "missing or non-string version tag"),
        }
        let command = obj
            .get("command")
            .and_then(Value::as_str)
            .ok_or(())
            .or_else(|_| schema_err("$.command", "expected string"))?
            .to_string();
        let instance_sha256 = obj
            .get("instance_sha256")
            .and_then(Value::as_str)
            .ok_or(())
            .or_else(|_| schema_err("$.instance_sha256", "expected string"))?
            .to_string();
        let context: BTreeMap<String, Value> = get_obj(
            obj.get("context")
                .ok_or(())
                .or_else(|_| schema_err("$.context", "missing field"))?,
            "$.context",
        )?
        .iter()
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
        let mut operators = BTreeMap::new();
        for (k, v) in get_obj(
            obj.get("operators")
                .ok_or(())
                .or_else(|_| schema_err("$.operators", "missing field"))?,
            "$.operators",
        )? {
            operators.insert(k.clone(), parse_matrix(v, &format!("$.operators.{k}"))?);
        }
        let mut residuals = BTreeMap::new();
        for (k, v) in get_obj(
            obj.get("residuals")
                .ok_or(())
                .or_else(|_| schema_err("$.residuals", "missing field"))?,
            "$.residuals",
        )? {
            residuals.insert(k.clone(), get_f64(v, &format!("$.residuals.{k}"))?);
        }
        let mut verdicts = BTreeMap::new();
        for (k, v) in get_obj(
            obj.get("verdicts")
                .ok_or(())
                .or_else(|_| schema_err("$.verdicts", "missing field"))?,
            "$.verdicts",
        )? {
            verdicts.insert(
                k.clone(),
                v.as_str()
                    .ok_or(())
                    .or_else(|_| schema_err::<&str>(&format!("$.verdicts.{k}"), "expected string"))?
                    .to_string(),
            );
        }
        Ok(CertificateFile {
            command,
            instance_sha256,
            context,
            operators,
            residuals,
            verdicts,
        })
    }

    /// Human-readable residual table.
    pub fn text_report(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("command:  {}\n", self.command));
        out.push_str(&format!("instance: {}\n", self.instance_sha256));
        for (k, v) in &self.verdicts {
            out.push_str(&format!("verdict   {k}: {v}\n"));
        }
        for (k, v) in &self.context {
            if self.shape_key(k) {
                continue;
            }
            out.push_str(&format!("context   {k}: {}\n", canonical_json(v)));
        }
        for (k, v) in &self.residuals {
            out.push_str(&format!("residual  {k}: {v:.3e}\n"));
        }
        out.push_str(&format!("operators: {}\n", self.operators.len()));
        out
    }

    fn shape_key(&self, k: &str) -> bool {
        matches!(
            k,
            "block_dims"
                | "chain"
                | "module_kind"
                | "module_rank"
                | "module_row_dims"
                | "flag_h"
                | "flag_k"
        )
    }
}

fn ctx_u64(cert: &CertificateFile, key: &str) -> Result<u64> {
    cert.context
        .get(key)
        .and_then(Value::as_u64)
        .ok_or(())
        .or_else(|_| schema_err(&format!("$.context.{key}"), "expected integer"))
}

/// Recompute every residual recorded in the certificate from the embedded
/// matrices. Returns the recomputed table with the same keys; errors with
/// `SCHEMA_ERROR` when an operator needed for a recorded residual is absent
/// or the command is unknown.
pub fn verify_certificate(cert: &CertificateFile) -> Result<BTreeMap<String, f64>> {
    let shape = cert.shape()?;
    let tol = cert.tolerances()?;
    let mut out = BTreeMap::new();
    let keys: Vec<String> = cert.residuals.keys().cloned().collect();

    match cert.command.as_str() {
        "check-cp" => {
            let phi = cert.rebuild_phi(&shape, "phi")?;
            let report = phi.cp_report(&tol);
            for k in &keys {
                let v = match k.as_str() {
                    "hermiticity" => report.hermiticity_residual,
                    "min_choi_eigenvalue" => report.min_choi_eigenvalue.ok_or_else(|| {
                        CpError::SchemaError {
                            path: "$.residuals.min_choi_eigenvalue".into(),
                            reason: "map is not Hermitian; eigenvalue not defined".into(),
                        }
                    })?,
                    _ => return unknown_residual(k),
                };
                out.insert(k.clone(), v);
            }
        }
        "dilate" => {
            let phi = cert.rebuild_phi(&shape, "phi")?;
            let pair = cert.rebuild_pair(&shape, "phi", "Phi")?;
            let report = phi.cp_report(&tol);
            let stine_needed = keys.iter().any(|k| {
                matches!(
                    k.as_str(),
                    "res1" | "res2" | "pi_hom" | "pi_star" | "pi_unital" | "module_rep"
                        | "module_action" | "w_sum"
                )
            });
            let stine = if stine_needed {
                Some(cert.rebuild_stine(&shape, "")?)
            } else {
                None
            };
            let recon = stine
                .as_ref()
                .map(|s| s.reconstruction_residual(pair.scalar_part(), &pair));
            let rep = stine.as_ref().map(|s| s.representation_report());
            for k in &keys {
                let v = match k.as_str() {
                    "hermiticity" => report.hermiticity_residual,
                    "min_choi_eigenvalue" => report.min_choi_eigenvalue.unwrap_or(f64::NAN),
                    "compatibility" => pair.compatibility_residual(),
                    "gram_min_eigenvalue" => {
                        let eig = herm_eig(&dilation_gram(&phi), &tol)?;
                        eig.values.last().copied().unwrap_or(0.0)
                    }
                    "res1" => recon.expect("stine built").0,
                    "res2" => recon.expect("stine built").1,
                    "pi_hom" => rep.as_ref().expect("stine built").pi_hom,
                    "pi_star" => rep.as_ref().expect("stine built").pi_star,
                    "pi_unital" => rep.as_ref().expect("stine built").pi_unital,
                    "module_rep" => rep.as_ref().expect("stine built").module_rep,
                    "module_action" => rep.as_ref().expect("stine built").module_action,
                    "w_sum" => rep.as_ref().expect("stine built").w_sum,
                    _ => return unknown_residual(k),
                };
                out.insert(k.clone(), v);
            }
        }
        "equiv" => {
            let a = cert.rebuild_stine(&shape, "a_")?;
            let b = cert.rebuild_stine(&shape, "b_")?;
            let u1 = cert.op("U1")?;
            let u2 = cert.op("U2")?;
            let unit = |u: &CMatrix<f64>| {
                let x = u
                    .adjoint()
                    .mul(u)
                    .dist_max(&CMatrix::identity(u.cols()));
                let y = u.mul(&u.adjoint()).dist_max(&CMatrix::identity(u.rows()));
                x.max(y)
            };
            for k in &keys {
                let v = match k.as_str() {
                    "welldef_u1" => u1
                        .mul(&a.generator_matrix_h())
                        .dist_max(&b.generator_matrix_h()),
                    "welldef_u2" => u2
                        .mul(&a.generator_matrix_k())
                        .dist_max(&b.generator_matrix_k()),
                    "unitarity_u1" => unit(&u1),
                    "unitarity_u2" => unit(&u2),
                    "diagram_s" => (0..shape.n)
                        .map(|i| u1.mul(&a.s_ops[i]).dist_max(&b.s_ops[i]))
                        .fold(0.0, f64::max),
                    "diagram_pi" => (0..a.pi_phi.len())
                        .map(|x| u1.mul(&a.pi_phi[x]).dist_max(&b.pi_phi[x].mul(&u1)))
                        .fold(0.0, f64::max),
                    "diagram_pi_mod" => (0..a.pi_mod.len())
                        .map(|x| u2.mul(&a.pi_mod[x]).dist_max(&b.pi_mod[x].mul(&u1)))
                        .fold(0.0, f64::max),
                    "diagram_w" => (0..shape.n)
                        .map(|i| u2.mul(&a.w_ops[i]).dist_max(&b.w_ops[i]))
                        .fold(0.0, f64::max),
                    _ => return unknown_residual(k),
                };
                out.insert(k.clone(), v);
            }
        }
        "dominate" => {
            let sub = cert.rebuild_pair(&shape, "sub_phi", "sub_Phi")?;
            let sup = cert.rebuild_pair(&shape, "sup_phi", "sup_Phi")?;
            for k in &keys {
                let v = match k.as_str() {
                    "min_choi_difference" => {
                        let diff = sup.scalar_part().sub_maps(sub.scalar_part())?;
                        diff.cp_report(&tol).min_choi_eigenvalue.unwrap_or(f64::NAN)
                    }
                    "witness_min_eigenvalue" => {
                        let xd = cert.op("witness_x")?;
                        let x = crate::module::ModuleElement::from_vector(
                            sub.module(),
                            &xd.column(0),
                        )?;
                        domination_form_min_eigenvalue(&sub, &sup, &x, &tol)?
                    }
                    _ => return unknown_residual(k),
                };
                out.insert(k.clone(), v);
            }
        }
        "commutant" => {
            let stine = cert.rebuild_stine(&shape, "")?;
            let dim = ctx_u64(cert, "commutant_dimension")? as usize;
            let basis: Vec<CommutantElement<f64>> = (0..dim)
                .map(|p| {
                    Ok(CommutantElement {
                        t_op: cert.op(&format!("T_{p}"))?,
                        n_op: cert.op(&format!("N_{p}"))?,
                    })
                })
                .collect::<Result<_>>()?;
            for k in &keys {
                let v = match k.as_str() {
                    "intertwining" => basis
                        .iter()
                        .map(|e| e.residual(&stine))
                        .fold(0.0, f64::max),
                    "closure" => commutant_closure_residual(&basis),
                    "t_determines_n" => t_determines_n_residual(&basis, &tol)?,
                    _ => return unknown_residual(k),
                };
                out.insert(k.clone(), v);
            }
        }
        "rn" => {
            let psi = cert.rebuild_pair(&shape, "psi_phi", "psi_Phi")?;
            for k in &keys {
                let v = match k.as_str() {
                    "min_choi_difference" => {
                        let sup = cert.rebuild_pair(&shape, "phi", "Phi")?;
                        let diff = sup.scalar_part().sub_maps(psi.scalar_part())?;
                        diff.cp_report(&tol).min_choi_eigenvalue.unwrap_or(f64::NAN)
                    }
                    "commutant_residual" | "spectrum_min" | "spectrum_max"
                    | "roundtrip_residual" => {
                        let stine = cert.rebuild_stine(&shape, "")?;
                        let delta = CommutantElement {
                            t_op: cert.op("Delta1")?,
                            n_op: cert.op("Delta2")?,
                        };
                        match k.as_str() {
                            "commutant_residual" => delta.residual(&stine),
                            "spectrum_min" => delta.spectrum_bounds(&tol)?.0,
                            "spectrum_max" => delta.spectrum_bounds(&tol)?.1,
                            _ => {
                                let roundtrip = deform(&stine, &delta.psd_sqrt(&tol)?, &tol)?;
                                form_distance(&psi, &roundtrip)?
                            }
                        }
                    }
                    _ => return unknown_residual(k),
                };
                out.insert(k.clone(), v);
            }
        }
        "iso-roundtrip" => {
            let stine = cert.rebuild_stine(&shape, "")?;
            for k in &keys {
                let (kind, t) = k
                    .rsplit_once('_')
                    .ok_or(())
                    .or_else(|_| unknown_residual::<(&str, &str)>(k))?;
                let t: usize = t
                    .parse()
                    .map_err(|_| CpError::SchemaError {
                        path: format!("$.residuals.{k}"),
                        reason: "expected a per-trial residual name".into(),
                    })?;
                let elem = CommutantElement {
                    t_op: cert.op(&format!("T_{t}"))?,
                    n_op: cert.op(&format!("N_{t}"))?,
                };
                let delta = CommutantElement {
                    t_op: cert.op(&format!("Delta1_{t}"))?,
                    n_op: cert.op(&format!("Delta2_{t}"))?,
                };
                let v = match kind {
                    "t_dev" => delta.t_op.dist_max(&elem.t_op),
                    "n_dev" => delta.n_op.dist_max(&elem.n_op),
                    "roundtrip" => {
                        let psi = deform(&stine, &elem.psd_sqrt(&tol)?, &tol)?;
                        let rt = deform(&stine, &delta.psd_sqrt(&tol)?, &tol)?;
                        form_distance(&psi, &rt)?
                    }
                    _ => return unknown_residual(k),
                };
                out.insert(k.clone(), v);
            }
        }
        other => {
            return schema_err("$.command", format!("unknown command `{other}`"));
        }
    }
    Ok(out)
}

fn unknown_residual<T>(name: &str) -> Result<T> {
    schema_err(
        &format!("$.residuals.{name}"),
        "residual name not recognized for this command",
    )
}

/// Compare a certificate's recorded residuals with their recomputation.
/// Returns the max absolute deviation.
pub fn verification_deviation(
    cert: &CertificateFile,
    recomputed: &BTreeMap<String, f64>,
) -> f64 {
    cert.residuals
        .iter()
        .map(|(k, &v)| {
            recomputed
                .get(k)
                .map(|&r| {
                    if v.is_nan() && r.is_nan() {
                        0.0
                    } else {
                        (v - r).abs()
                    }
                })
                .unwrap_or(f64::INFINITY)
        })
        .fold(0.0, f64::max)
}

/// Re-derive the module element a `dominate` run used as its refutation
/// witness, from the seed and sample index recorded in the certificate.
pub fn dominate_witness_from_context(
    cert: &CertificateFile,
    module: &Arc<HilbertModule>,
) -> Result<crate::module::ModuleElement<f64>> {
    let seed = ctx_u64(cert, "seed")?;
    let sample = ctx_u64(cert, "witness_sample")? as usize;
    Ok(domination_witness_element(module, seed, sample))
}
