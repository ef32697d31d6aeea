//! Instance files: the JSON input format of the `cpdilate` tool.
//!
//! Version tag `"cpdilate/1"`. Complex entries are `[re, im]` pairs and
//! matrices are row-major. Map grids store each entry `φ_ij` (resp. `Φ_ij`)
//! as the `(h·h) x dim A` (resp. `(k·h) x dim M`) matrix of the linear map
//! on the matrix-unit basis, columns indexed by basis element.
//!
//! All output (instances and certificates) is canonical JSON: sorted keys,
//! no whitespace, floats printed with 17 significant digits. Identical data
//! serializes to identical bytes.

use crate::algebra::CStarAlgebra;
use crate::cpmatrix::{ModuleCPMatrix, NPositiveMatrixMap};
use crate::error::{CpError, Result};
use crate::flag::FlagSpace;
use crate::linalg::{CMatrix, Tolerances};
use crate::module::{HilbertModule, ModuleKind};
use num_complex::Complex;
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::sync::Arc;

pub const INSTANCE_VERSION: &str = "cpdilate/1";

/// Row-major complex matrix as stored in instance and certificate files.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixData {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl MatrixData {
    pub fn from_cmatrix(m: &CMatrix<f64>) -> Self {
        MatrixData {
            rows: m.rows(),
            cols: m.cols(),
            data: m.data().iter().map(|z| [z.re, z.im]).collect(),
        }
    }

    pub fn to_cmatrix(&self) -> Result<CMatrix<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(CpError::DimensionMismatch {
                context: format!(
                    "matrix declared {}x{} but has {} entries",
                    self.rows,
                    self.cols,
                    self.data.len()
                ),
            });
        }
        Ok(CMatrix::new(
            self.rows,
            self.cols,
            self.data.iter().map(|p| Complex::new(p[0], p[1])).collect(),
        ))
    }

    pub fn to_value(&self) -> Value {
        let data: Vec<Value> = self
            .data
            .iter()
            .map(|p| Value::Array(vec![float_value(p[0]), float_value(p[1])]))
            .collect();
        let mut obj = serde_json::Map::new();
        obj.insert("cols".into(), Value::from(self.cols as u64));
        obj.insert("data".into(), Value::Array(data));
        obj.insert("rows".into(), Value::from(self.rows as u64));
        Value::Object(obj)
    }
}

pub(crate) fn float_value(x: f64) -> Value {
    Value::Number(serde_json::Number::from_f64(x).expect("finite float"))
}

/// A parsed and validated instance file.
#[derive(Debug, Clone)]
pub struct InstanceFile {
    pub block_dims: Vec<usize>,
    pub chain: Vec<Vec<usize>>,
    pub module_kind: ModuleKind,
    pub flag_h: Vec<usize>,
    pub flag_k: Vec<usize>,
    pub n: usize,
    pub phi: Option<Vec<MatrixData>>,
    pub big_phi: Option<Vec<MatrixData>>,
    pub phi2: Option<Vec<MatrixData>>,
    pub big_phi2: Option<Vec<MatrixData>>,
    pub tolerances: Option<(f64, f64, f64)>,
    pub seed: Option<u64>,
}

pub(crate) fn schema_err<T>(path: &str, reason: impl Into<String>) -> Result<T> {
    Err(CpError::SchemaError {
        path: path.to_string(),
        reason: reason.into(),
    })
}

pub(crate) fn get_obj<'a>(v: &'a Value, path: &str) -> Result<&'a serde_json::Map<String, Value>> {
    v.as_object()
        .ok_or(())
        .or_else(|_| schema_err(path, "expected object"))
}

pub(crate) fn get_usize(v: &Value, path: &str) -> Result<usize> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or(())
        .or_else(|_| schema_err(path, "expected nonnegative integer"))
}

pub(crate) fn get_f64(v: &Value, path: &str) -> Result<f64> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or(())
        .or_else(|_| schema_err(path, "expected finite number"))
}

pub(crate) fn get_usize_list(v: &Value, path: &str) -> Result<Vec<usize>> {
    let arr = v
        .as_array()
        .ok_or(())
        .or_else(|_| schema_err::<&Vec<Value>>(path, "expected array"))?;
    arr.iter()
        .enumerate()
        .map(|(i, e)| get_usize(e, &format!("{path}[{i}]")))
        .collect()
}

pub(crate) fn parse_matrix(v: &Value, path: &str) -> Result<MatrixData> {
    let obj = get_obj(v, path)?;
    let rows = get_usize(
        obj.get("rows")
            .ok_or(())
            .or_else(|_| schema_err(path, "missing field `rows`"))?,
        &format!("{path}.rows"),
    )?;
    let cols = get_usize(
        obj.get("cols")
            .ok_or(())
            .or_else(|_| schema_err(path, "missing field `cols`"))?,
        &format!("{path}.cols"),
    )?;
    let data_v = obj
        .get("data")
        .ok_or(())
        .or_else(|_| schema_err(path, "missing field `data`"))?;
    let arr = data_v
        .as_array()
        .ok_or(())
        .or_else(|_| schema_err::<&Vec<Value>>(&format!("{path}.data"), "expected array"))?;
    if arr.len() != rows * cols {
        return schema_err(
            &format!("{path}.data"),
            format!("expected {} entries for a {rows}x{cols} matrix, got {}", rows * cols, arr.len()),
        );
    }
    let mut data = Vec::with_capacity(arr.len());
    for (i, e) in arr.iter().enumerate() {
        let epath = format!("{path}.data[{i}]");
        let pair = e
            .as_array()
            .ok_or(())
            .or_else(|_| schema_err::<&Vec<Value>>(&epath, "expected [re, im] pair"))?;
        if pair.len() != 2 {
            return schema_err(&epath, format!("complex entry must have 2 components, got {}", pair.len()));
        }
        data.push([get_f64(&pair[0], &epath)?, get_f64(&pair[1], &epath)?]);
    }
    Ok(MatrixData { rows, cols, data })
}

fn parse_grid(v: &Value, path: &str, n: usize) -> Result<Vec<MatrixData>> {
    let arr = v
        .as_array()
        .ok_or(())
        .or_else(|_| schema_err::<&Vec<Value>>(path, "expected array of matrices"))?;
    if arr.len() != n * n {
        return schema_err(path, format!("expected {} entries (n = {n}), got {}", n * n, arr.len()));
    }
    arr.iter()
        .enumerate()
        .map(|(i, e)| parse_matrix(e, &format!("{path}[{i}]")))
        .collect()
}

/// Parse and validate an instance file from JSON bytes.
pub fn parse_instance(bytes: &[u8]) -> Result<InstanceFile> {
    let root: Value = serde_json::from_slice(bytes)?;
    let obj = get_obj(&root, "$")?;
    match obj.get("version").and_then(Value::as_str) {
        Some(INSTANCE_VERSION) => {}
        Some(other) => {
            return Err(CpError::VersionUnsupported {
                found: other.to_string(),
            })
        }
        None => return schema_err("$.version", "missing or non-string version tag"),
    }
    let alg_v = obj
        .get("algebra")
        .ok_or(())
        .or_else(|_| schema_err("$.algebra", "missing field"))?;
    let alg_obj = get_obj(alg_v, "$.algebra")?;
    let block_dims = get_usize_list(
        alg_obj
            .get("block_dims")
            .ok_or(())
            .or_else(|_| schema_err("$.algebra.block_dims", "missing field"))?,
        "$.algebra.block_dims",
    )?;
    let chain = match alg_obj.get("chain") {
        None | Some(Value::Null) => vec![(0..block_dims.len()).collect()],
        Some(c) => {
            let arr = c
                .as_array()
                .ok_or(())
                .or_else(|_| schema_err::<&Vec<Value>>("$.algebra.chain", "expected array"))?;
            arr.iter()
                .enumerate()
                .map(|(i, l)| get_usize_list(l, &format!("$.algebra.chain[{i}]")))
                .collect::<Result<Vec<_>>>()?
        }
    };
    let module_kind = match obj.get("module") {
        None => ModuleKind::SelfModule,
        Some(m) => {
            let mobj = get_obj(m, "$.module")?;
            match mobj.get("kind").and_then(Value::as_str) {
                Some("self") => ModuleKind::SelfModule,
                Some("free") => ModuleKind::Free(get_usize(
                    mobj.get("rank")
                        .ok_or(())
                        .or_else(|_| schema_err("$.module.rank", "missing field for kind `free`"))?,
                    "$.module.rank",
                )?),
                Some("rect") => ModuleKind::Rect(get_usize_list(
                    mobj.get("row_dims").ok_or(()).or_else(|_| {
                        schema_err("$.module.row_dims", "missing field for kind `rect`")
                    })?,
                    "$.module.row_dims",
                )?),
                _ => return schema_err("$.module.kind", "expected one of `self`, `free`, `rect`"),
            }
        }
    };
    let flag_h = get_usize_list(
        obj.get("flag_h")
            .ok_or(())
            .or_else(|_| schema_err("$.flag_h", "missing field"))?,
        "$.flag_h",
    )?;
    let flag_k = get_usize_list(
        obj.get("flag_k")
            .ok_or(())
            .or_else(|_| schema_err("$.flag_k", "missing field"))?,
        "$.flag_k",
    )?;
    let n = get_usize(
        obj.get("n")
            .ok_or(())
            .or_else(|_| schema_err("$.n", "missing field"))?,
        "$.n",
    )?;
    let grid = |key: &str| -> Result<Option<Vec<MatrixData>>> {
        match obj.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => Ok(Some(parse_grid(v, &format!("$.{key}"), n)?)),
        }
    };
    let tolerances = match obj.get("tolerances") {
        None | Some(Value::Null) => None,
        Some(t) => {
            let tobj = get_obj(t, "$.tolerances")?;
            let field = |k: &str| -> Result<f64> {
                get_f64(
                    tobj.get(k)
                        .ok_or(())
                        .or_else(|_| schema_err(&format!("$.tolerances.{k}"), "missing field"))?,
                    &format!("$.tolerances.{k}"),
                )
            };
            Some((field("rank_tol")?, field("psd_tol")?, field("residual_tol")?))
        }
    };
    let seed = match obj.get("seed") {
        None | Some(Value::Null) => None,
        Some(s) => Some(get_usize(s, "$.seed")? as u64),
    };
    Ok(InstanceFile {
        block_dims,
        chain,
        module_kind,
        flag_h,
        flag_k,
        n,
        phi: grid("phi")?,
        big_phi: grid("Phi")?,
        phi2: grid("phi2")?,
        big_phi2: grid("Phi2")?,
        tolerances,
        seed,
    })
}

impl InstanceFile {
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

    fn build_phi(&self, grid: &[MatrixData]) -> Result<NPositiveMatrixMap<f64>> {
        let maps = grid
            .iter()
            .map(|m| m.to_cmatrix())
            .collect::<Result<Vec<_>>>()?;
        NPositiveMatrixMap::new(self.n, self.algebra()?, self.space_h()?, maps)
    }

    fn build_big_phi(
        &self,
        grid: &[MatrixData],
        scalar: NPositiveMatrixMap<f64>,
    ) -> Result<ModuleCPMatrix<f64>> {
        let maps = grid
            .iter()
            .map(|m| m.to_cmatrix())
            .collect::<Result<Vec<_>>>()?;
        ModuleCPMatrix::new(self.module()?, self.space_k()?, maps, scalar)
    }

    /// The primary scalar map grid (`phi`), required.
    pub fn primary_phi(&self) -> Result<NPositiveMatrixMap<f64>> {
        match &self.phi {
            Some(g) => self.build_phi(g),
            None => Err(CpError::InvalidInput {
                context: "instance has no `phi` grid".into(),
            }),
        }
    }

    /// The primary pair (`phi`, `Phi`), both required.
    pub fn primary_pair(&self) -> Result<ModuleCPMatrix<f64>> {
        let phi = self.primary_phi()?;
        match &self.big_phi {
            Some(g) => self.build_big_phi(g, phi),
            None => Err(CpError::InvalidInput {
                context: "instance has no `Phi` grid".into(),
            }),
        }
    }

    /// The secondary pair (`phi2`, `Phi2`) used by comparison commands.
    pub fn secondary_pair(&self) -> Result<ModuleCPMatrix<f64>> {
        let phi = match &self.phi2 {
            Some(g) => self.build_phi(g)?,
            None => {
                return Err(CpError::InvalidInput {
                    context: "instance has no `phi2` grid".into(),
                })
            }
        };
        match &self.big_phi2 {
            Some(g) => self.build_big_phi(g, phi),
            None => Err(CpError::InvalidInput {
                context: "instance has no `Phi2` grid".into(),
            }),
        }
    }

    /// Tolerances recorded in the instance, falling back to defaults.
    pub fn base_tolerances(&self) -> Result<Tolerances<f64>> {
        match self.tolerances {
            Some((r, p, res)) => Tolerances::new(r, p, res),
            None => Ok(Tolerances::default()),
        }
    }

    /// Canonical JSON value of the instance.
    pub fn to_value(&self) -> Value {
        let mut obj = serde_json::Map::new();
        let mut alg = serde_json::Map::new();
        alg.insert(
            "block_dims".into(),
            Value::Array(self.block_dims.iter().map(|&d| Value::from(d as u64)).collect()),
        );
        alg.insert(
            "chain".into(),
            Value::Array(
                self.chain
                    .iter()
                    .map(|l| Value::Array(l.iter().map(|&b| Value::from(b as u64)).collect()))
                    .collect(),
            ),
        );
        obj.insert("algebra".into(), Value::Object(alg));
        let mut module = serde_json::Map::new();
        match &self.module_kind {
            ModuleKind::SelfModule => {
                module.insert("kind".into(), Value::String("self".into()));
            }
            ModuleKind::Free(p) => {
                module.insert("kind".into(), Value::String("free".into()));
                module.insert("rank".into(), Value::from(*p as u64));
            }
            ModuleKind::Rect(rows) => {
                module.insert("kind".into(), Value::String("rect".into()));
                module.insert(
                    "row_dims".into(),
                    Value::Array(rows.iter().map(|&r| Value::from(r as u64)).collect()),
                );
            }
        }
        obj.insert("module".into(), Value::Object(module));
        obj.insert(
            "flag_h".into(),
            Value::Array(self.flag_h.iter().map(|&d| Value::from(d as u64)).collect()),
        );
        obj.insert(
            "flag_k".into(),
            Value::Array(self.flag_k.iter().map(|&d| Value::from(d as u64)).collect()),
        );
        obj.insert("n".into(), Value::from(self.n as u64));
        let grid_value = |g: &Vec<MatrixData>| Value::Array(g.iter().map(|m| m.to_value()).collect());
        if let Some(g) = &self.phi {
            obj.insert("phi".into(), grid_value(g));
        }
        if let Some(g) = &self.big_phi {
            obj.insert("Phi".into(), grid_value(g));
        }
        if let Some(g) = &self.phi2 {
            obj.insert("phi2".into(), grid_value(g));
        }
        if let Some(g) = &self.big_phi2 {
            obj.insert("Phi2".into(), grid_value(g));
        }
        if let Some((r, p, res)) = self.tolerances {
            let mut t = serde_json::Map::new();
            t.insert("psd_tol".into(), float_value(p));
            t.insert("rank_tol".into(), float_value(r));
            t.insert("residual_tol".into(), float_value(res));
            obj.insert("tolerances".into(), Value::Object(t));
        }
        if let Some(seed) = self.seed {
            obj.insert("seed".into(), Value::from(seed));
        }
        obj.insert("version".into(), Value::String(INSTANCE_VERSION.into()));
        Value::Object(obj)
    }

    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        canonical_json(&self.to_value()).into_bytes()
    }

    /// SHA-256 of the canonical serialization, hex-encoded.
    pub fn sha256(&self) -> String {
        sha256_hex(&self.to_canonical_bytes())
    }

    /// Build an instance from a pair of maps plus its shape data.
    pub fn from_pair(big_phi: &ModuleCPMatrix<f64>, seed: Option<u64>) -> Self {
        let phi = big_phi.scalar_part();
        let n = phi.n();
        let grid = |f: &dyn Fn(usize, usize) -> MatrixData| {
            let mut g = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    g.push(f(i, j));
                }
            }
            g
        };
        InstanceFile {
            block_dims: phi.algebra().block_dims().to_vec(),
            chain: phi.algebra().chain().to_vec(),
            module_kind: big_phi.module().kind().clone(),
            flag_h: phi.space().dims().to_vec(),
            flag_k: big_phi.target().dims().to_vec(),
            n,
            phi: Some(grid(&|i, j| {
                MatrixData::from_cmatrix(phi.entry(i, j).expect("in range"))
            })),
            big_phi: Some(grid(&|i, j| {
                MatrixData::from_cmatrix(big_phi.entry(i, j).expect("in range"))
            })),
            phi2: None,
            big_phi2: None,
            tolerances: None,
            seed,
        }
    }

    /// Attach a secondary pair (`phi2`, `Phi2`) with the same shape data.
    pub fn set_secondary_pair(&mut self, big_phi2: &ModuleCPMatrix<f64>) {
        let phi2 = big_phi2.scalar_part();
        let n = self.n;
        let grid = |f: &dyn Fn(usize, usize) -> MatrixData| {
            let mut g = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    g.push(f(i, j));
                }
            }
            g
        };
        self.phi2 = Some(grid(&|i, j| {
            MatrixData::from_cmatrix(phi2.entry(i, j).expect("in range"))
        }));
        self.big_phi2 = Some(grid(&|i, j| {
            MatrixData::from_cmatrix(big_phi2.entry(i, j).expect("in range"))
        }));
    }
}

/// Serialize a JSON value canonically: keys sorted (serde_json's map is a
/// BTreeMap), no whitespace, every float printed as `{:.16e}`.
pub fn canonical_json(v: &Value) -> String {
    let mut out = String::new();
    write_canonical(v, &mut out);
    out
}

fn write_canonical(v: &Value, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else {
                out.push_str(&format!("{:.16e}", n.as_f64().expect("number")));
            }
        }
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("string encodes"));
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            out.push('{');
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("string encodes"));
                out.push(':');
                write_canonical(&map[k], out);
            }
            out.push('}');
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpmatrix::random_cp_pair;
    use crate::module::ModuleKind;

    fn sample_instance() -> InstanceFile {
        let alg = CStarAlgebra::matrix(2);
        let module = HilbertModule::new(Arc::clone(&alg), ModuleKind::SelfModule).unwrap();
        let pair = random_cp_pair::<f64>(
            &alg,
            &module,
            &FlagSpace::trivial(2),
            &FlagSpace::trivial(2),
            2,
            2,
            None,
            5,
        )
        .unwrap();
        InstanceFile::from_pair(&pair.big_phi, Some(5))
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let inst = sample_instance();
        let bytes = inst.to_canonical_bytes();
        let parsed = parse_instance(&bytes).unwrap();
        assert_eq!(parsed.to_canonical_bytes(), bytes);
        assert_eq!(parsed.sha256(), inst.sha256());
        // and the rebuilt maps agree exactly
        let a = inst.primary_pair().unwrap();
        let b = parsed.primary_pair().unwrap();
        assert_eq!(a.dist_max(&b), 0.0);
    }

    #[test]
    fn canonical_floats_use_17_digits() {
        let v = serde_json::json!({"x": 0.1, "n": 3});
        assert_eq!(canonical_json(&v), "{\"n\":3,\"x\":1.0000000000000001e-1}");
        let parsed: Value = serde_json::from_str("{\"x\":1.0000000000000001e-1}").unwrap();
        assert_eq!(parsed["x"].as_f64().unwrap(), 0.1);
    }

    #[test]
    fn schema_errors_carry_field_paths() {
        let inst = sample_instance();
        let mut v: Value = serde_json::from_slice(&inst.to_canonical_bytes()).unwrap();
        // corrupt one complex entry into a 3-element pair
        v["phi"][0]["data"][0] = serde_json::json!([1.0, 0.0, 0.0]);
        let err = parse_instance(canonical_json(&v).as_bytes()).unwrap_err();
        match err {
            CpError::SchemaError { path, .. } => {
                assert_eq!(path, "$.phi[0].data[0]");
            }
            other => panic!("expected schema error, got {other:?}"),
        }
        // unsupported version
        v["phi"][0]["data"][0] = serde_json::json!([1.0, 0.0]);
        v["version"] = serde_json::json!("cpdilate/9");
        assert!(matches!(
            parse_instance(canonical_json(&v).as_bytes()),
            Err(CpError::VersionUnsupported { .. })
        ));
    }

    #[test]
    fn minimal_identity_instance_parses_with_defaults() {
        // n = 1 identity map on M_1: phi entry is the 1x1 identity
        let text = r#"{
            "version": "cpdilate/1",
            "algebra": {"block_dims": [1]},
            "flag_h": [1],
            "flag_k": [1],
            "n": 1,
            "phi": [{"rows": 1, "cols": 1, "data": [[1.0, 0.0]]}]
        }"#;
        let inst = parse_instance(text.as_bytes()).unwrap();
        assert!(matches!(inst.module_kind, ModuleKind::SelfModule));
        assert_eq!(inst.chain, vec![vec![0]]);
        assert!(inst.tolerances.is_none());
        let phi = inst.primary_phi().unwrap();
        assert!(phi.cp_check(&Tolerances::default()));
    }
}
