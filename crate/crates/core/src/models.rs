//! Translation-covariant chiral tight-binding models and their finite-torus
//! realizations.
//!
//! Hoppings are keyed by the displacement `a = x - y`, so that
//! `⟨x|H|y⟩ = t_{x-y}` and the Bloch Hamiltonian is `H(k) = Σ_a t_a e^{i a·k}`.
//! The chiral frame is rotated to `diag(1_N, -1_N)` when the model is built;
//! realization matrices are ordered sector-major (`+` sector first, then
//! site, then orbital) so the chiral block is a fixed sub-matrix.

use std::collections::BTreeMap;

use ndarray::{s, Array2, ArrayView2};
use ndarray_linalg::{EigValsh, UPLO};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Torus;
use crate::linalg::{adjoint, hermitian_eigh, hermiticity_residual, max_abs, CMatrix, C64, I};

const FRAME_TOL: f64 = 1e-12;

/// Distribution of a disorder variable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum Law {
    #[default]
    Zero,
    Uniform {
        lo: f64,
        hi: f64,
    },
}

impl Law {
    /// The centred unit-width law used by the disordered chain.
    pub const CENTERED_UNIT: Law = Law::Uniform { lo: -0.5, hi: 0.5 };

    fn map(&self, u: f64) -> f64 {
        match *self {
            Law::Zero => 0.0,
            Law::Uniform { lo, hi } => lo + (hi - lo) * u,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Law::Zero)
    }
}

/// Random bond and on-site perturbations.
///
/// A bond `(x, x+a)` with canonical displacement `a` is scaled by
/// `1 + λ ω_{x,x+a}` on both of its hermitian-conjugate entries (so
/// `ω_{x,y} = conj(ω_{y,x})` holds with real variables), and each site
/// receives `λ' ω'_x M` with a fixed chiral-odd Hermitian `M`.
#[derive(Clone, Debug, Default)]
pub struct DisorderSpec {
    pub bond_law: Law,
    pub bond_coupling: f64,
    pub site_law: Law,
    pub site_coupling: f64,
    pub site_matrix: Option<CMatrix>,
}

impl DisorderSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_clean(&self) -> bool {
        let bond_off = self.bond_law.is_zero() || self.bond_coupling == 0.0;
        let site_off = self.site_law.is_zero() || self.site_coupling == 0.0 || self.site_matrix.is_none();
        bond_off && site_off
    }
}

#[derive(Clone, Debug)]
pub struct HoppingModel {
    name: String,
    dim: usize,
    orbitals: usize,
    hoppings: BTreeMap<Vec<i64>, CMatrix>,
    frame_rotation: CMatrix,
    magnetic_form: Array2<f64>,
    disorder: DisorderSpec,
}

fn chirality_residual_of(t: &ArrayView2<C64>, n: usize) -> f64 {
    let a = max_abs(&t.slice(s![..n, ..n]));
    let b = max_abs(&t.slice(s![n.., n..]));
    a.max(b)
}

/// Unitary `W` with `W† Ŝ W = diag(1_N, -1_N)`.
fn chiral_frame_rotation(frame: &CMatrix, n: usize) -> Result<CMatrix> {
    let two_n = 2 * n;
    if frame.dim() != (two_n, two_n) {
        return Err(Error::InvalidModel(format!("chiral frame must be {two_n}x{two_n}")));
    }
    let mut canonical = Array2::<C64>::eye(two_n);
    for i in n..two_n {
        canonical[[i, i]] = C64::new(-1.0, 0.0);
    }
    if max_abs(&(frame - &canonical).view()) < FRAME_TOL {
        return Ok(Array2::eye(two_n));
    }
    if hermiticity_residual(&frame.view()) > FRAME_TOL {
        return Err(Error::InvalidModel("chiral frame is not Hermitian".into()));
    }
    let square = frame.dot(frame);
    if max_abs(&(square - Array2::<C64>::eye(two_n)).view()) > 1e-10 {
        return Err(Error::InvalidModel("chiral frame is not an involution".into()));
    }
    let (vals, vecs) = hermitian_eigh(&frame.view())?;
    let plus = vals.iter().filter(|&&v| v > 0.0).count();
    if plus != n {
        return Err(Error::InvalidModel(format!(
            "chiral frame has {plus} positive eigenvalues, expected {n}"
        )));
    }
    // eigh sorts ascending: put the +1 eigenvectors first
    let mut w = Array2::<C64>::zeros((two_n, two_n));
    for (dst, src) in (0..two_n).zip((n..two_n).chain(0..n)) {
        w.column_mut(dst).assign(&vecs.column(src));
    }
    Ok(w)
}

impl HoppingModel {
    /// Validates and normalizes a model. Missing partners `t_{-a}` are filled
    /// in as `t_a†`; present partners must already satisfy `t_{-a} = t_a†`.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        orbitals: usize,
        hoppings: Vec<(Vec<i64>, CMatrix)>,
        chiral_frame: &CMatrix,
        magnetic_form: Array2<f64>,
        disorder: DisorderSpec,
    ) -> Result<Self> {
        if dim == 0 || dim % 2 == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        if orbitals == 0 || orbitals % 2 != 0 {
            return Err(Error::InvalidModel(format!("orbital count must be even, got {orbitals}")));
        }
        let n = orbitals / 2;
        let w = chiral_frame_rotation(chiral_frame, n)?;
        let w_adj = adjoint(&w.view());
        let rotate = |t: &CMatrix| w_adj.dot(t).dot(&w);

        let mut map: BTreeMap<Vec<i64>, CMatrix> = BTreeMap::new();
        for (a, t) in hoppings {
            if a.len() != dim {
                return Err(Error::InvalidModel(format!("displacement {a:?} is not in Z^{dim}")));
            }
            if t.dim() != (orbitals, orbitals) {
                return Err(Error::InvalidModel(format!("hopping at {a:?} must be {orbitals}x{orbitals}")));
            }
            if let Some(prev) = map.get_mut(&a) {
                *prev += &t;
            } else {
                map.insert(a, t);
            }
        }
        let keys: Vec<Vec<i64>> = map.keys().cloned().collect();
        for a in keys {
            let minus: Vec<i64> = a.iter().map(|v| -v).collect();
            let adj = adjoint(&map[&a].view());
            match map.get(&minus) {
                Some(t) => {
                    let r = max_abs(&(t - &adj).view());
                    if r > 1e-12 {
                        return Err(Error::InvalidModel(format!(
                            "t_{{-a}} != t_a^dagger at a = {a:?} (residual {r:.2e})"
                        )));
                    }
                }
                None => {
                    map.insert(minus, adj);
                }
            }
        }
        let mut rotated = BTreeMap::new();
        let mut chir = 0.0f64;
        for (a, t) in map {
            let tr = rotate(&t);
            chir = chir.max(chirality_residual_of(&tr.view(), n));
            rotated.insert(a, tr);
        }
        if chir > 1e-12 {
            return Err(Error::NotChiral { residual: chir });
        }

        if magnetic_form.dim() != (dim, dim) {
            return Err(Error::InvalidModel(format!("magnetic form must be {dim}x{dim}")));
        }
        for i in 0..dim {
            for j in 0..dim {
                if (magnetic_form[[i, j]] + magnetic_form[[j, i]]).abs() > 1e-14 {
                    return Err(Error::InvalidModel("magnetic form is not antisymmetric".into()));
                }
            }
        }

        let mut disorder = disorder;
        if let Some(m) = disorder.site_matrix.take() {
            if m.dim() != (orbitals, orbitals) {
                return Err(Error::InvalidModel("site disorder matrix has wrong shape".into()));
            }
            if hermiticity_residual(&m.view()) > 1e-12 {
                return Err(Error::InvalidModel("site disorder matrix is not Hermitian".into()));
            }
            let mr = rotate(&m);
            let r = chirality_residual_of(&mr.view(), n);
            if r > 1e-12 {
                return Err(Error::NotChiral { residual: r });
            }
            disorder.site_matrix = Some(mr);
        }

        Ok(Self {
            name: name.into(),
            dim,
            orbitals,
            hoppings: rotated,
            frame_rotation: w,
            magnetic_form,
            disorder,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Orbitals per site, `2N`.
    pub fn orbitals(&self) -> usize {
        self.orbitals
    }

    /// `N`
    pub fn half_orbitals(&self) -> usize {
        self.orbitals / 2
    }

    /// Hoppings in the normalized chiral frame.
    pub fn hoppings(&self) -> impl Iterator<Item = (&Vec<i64>, &CMatrix)> {
        self.hoppings.iter()
    }

    pub fn hopping(&self, a: &[i64]) -> Option<&CMatrix> {
        self.hoppings.get(a)
    }

    /// Basis change from the normalized frame back to the input frame.
    pub fn frame_rotation(&self) -> &CMatrix {
        &self.frame_rotation
    }

    pub fn magnetic_form(&self) -> &Array2<f64> {
        &self.magnetic_form
    }

    pub fn disorder(&self) -> &DisorderSpec {
        &self.disorder
    }

    /// Sup-norm hopping range `R`.
    pub fn range(&self) -> usize {
        self.hoppings
            .keys()
            .flat_map(|a| a.iter().map(|v| v.unsigned_abs() as usize))
            .max()
            .unwrap_or(0)
    }

    pub fn has_magnetic_field(&self) -> bool {
        self.magnetic_form.iter().any(|&v| v != 0.0)
    }

    pub fn is_periodic(&self) -> bool {
        self.disorder.is_clean() && !self.has_magnetic_field()
    }

    pub fn with_disorder(mut self, disorder: DisorderSpec) -> Result<Self> {
        let mut disorder = disorder;
        if let Some(m) = disorder.site_matrix.take() {
            let w_adj = adjoint(&self.frame_rotation.view());
            let mr = w_adj.dot(&m).dot(&self.frame_rotation);
            let r = chirality_residual_of(&mr.view(), self.half_orbitals());
            if r > 1e-12 {
                return Err(Error::NotChiral { residual: r });
            }
            disorder.site_matrix = Some(mr);
        }
        self.disorder = disorder;
        Ok(self)
    }

    pub fn with_magnetic_form(mut self, form: Array2<f64>) -> Result<Self> {
        if form.dim() != (self.dim, self.dim) {
            return Err(Error::InvalidModel("magnetic form has wrong shape".into()));
        }
        if (0..self.dim).any(|i| (0..self.dim).any(|j| (form[[i, j]] + form[[j, i]]).abs() > 1e-14)) {
            return Err(Error::InvalidModel("magnetic form is not antisymmetric".into()));
        }
        self.magnetic_form = form;
        Ok(self)
    }

    /// `H(k) = Σ_a t_a e^{i a·k}` in the normalized chiral frame.
    pub fn bloch_hamiltonian(&self, k: &[f64]) -> Result<CMatrix> {
        if !self.is_periodic() {
            return Err(Error::NotPeriodic("disorder and magnetic field must vanish"));
        }
        if k.len() != self.dim {
            return Err(Error::Malformed(format!("k must have {} components", self.dim)));
        }
        let mut h = Array2::<C64>::zeros((self.orbitals, self.orbitals));
        for (a, t) in &self.hoppings {
            let phase: f64 = a.iter().zip(k).map(|(&ai, &ki)| ai as f64 * ki).sum();
            h.scaled_add(C64::from_polar(1.0, phase), t);
        }
        Ok(h)
    }

    /// Upper-right `N × N` block `A(k)` of the Bloch Hamiltonian.
    pub fn bloch_chiral_block(&self, k: &[f64]) -> Result<CMatrix> {
        let n = self.half_orbitals();
        Ok(self.bloch_hamiltonian(k)?.slice(s![..n, n..]).to_owned())
    }

    /// Displacements `a ≠ 0` whose first non-zero component is positive.
    pub fn canonical_bonds(&self) -> Vec<Vec<i64>> {
        self.hoppings
            .keys()
            .filter(|a| a.iter().find(|&&v| v != 0).is_some_and(|&v| v > 0))
            .cloned()
            .collect()
    }
}

fn cplx(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn pauli_y() -> CMatrix {
    ndarray::array![[cplx(0.0, 0.0), -I], [I, cplx(0.0, 0.0)]]
}

fn sigma_z_frame(n: usize) -> CMatrix {
    let mut s = Array2::<C64>::eye(2 * n);
    for i in n..2 * n {
        s[[i, i]] = cplx(-1.0, 0.0);
    }
    s
}

/// The clean two-band chain
/// `(Hψ)(x) = ½(σ₁+iσ₂)ψ(x+1) + ½(σ₁-iσ₂)ψ(x-1) + m σ₂ ψ(x)` with chirality `σ₃`.
///
/// In the `t_{x-y}` convention the `ψ(x+1)` term is `t_{-1}`.
pub fn model1(m: f64) -> HoppingModel {
    let z = cplx(0.0, 0.0);
    let o = cplx(1.0, 0.0);
    let raise = ndarray::array![[z, o], [z, z]];
    let lower = ndarray::array![[z, z], [o, z]];
    HoppingModel::new(
        "model1",
        1,
        2,
        vec![(vec![-1], raise), (vec![1], lower), (vec![0], pauli_y() * cplx(m, 0.0))],
        &sigma_z_frame(1),
        Array2::zeros((1, 1)),
        DisorderSpec::none(),
    )
    .expect("model1 is a valid chiral model")
}

/// `model1` with bond disorder `1 + λ ω` and mass disorder `m + λ' ω'`,
/// `ω, ω'` uniform on `[-½, ½]`.
pub fn model2(m: f64, lambda: f64, lambda_prime: f64) -> HoppingModel {
    let mut model = model1(m)
        .with_disorder(DisorderSpec {
            bond_law: Law::CENTERED_UNIT,
            bond_coupling: lambda,
            site_law: Law::CENTERED_UNIT,
            site_coupling: lambda_prime,
            site_matrix: Some(pauli_y()),
        })
        .expect("σ₂ mass disorder is chiral");
    model.name = "model2".into();
    model
}

/// A four-band nearest-neighbour chiral model on `Z^3` with chiral block
/// `A(k) = (m + Σ_j cos k_j) 1 + i Σ_j sin k_j τ_j` (`τ_j` Pauli matrices).
///
/// The gap closes at `m ∈ {±1, ±3}`.
pub fn model3d_reference(m: f64) -> HoppingModel {
    let z = cplx(0.0, 0.0);
    let o = cplx(1.0, 0.0);
    let tau = [
        ndarray::array![[z, o], [o, z]],
        ndarray::array![[z, -I], [I, z]],
        ndarray::array![[o, z], [z, -o]],
    ];
    let one = Array2::<C64>::eye(2);
    let embed = |alpha: &CMatrix, alpha_minus: &CMatrix| {
        // t_a = [[0, α_a], [α_{-a}†, 0]]
        let mut t = Array2::<C64>::zeros((4, 4));
        t.slice_mut(s![..2, 2..]).assign(alpha);
        t.slice_mut(s![2.., ..2]).assign(&adjoint(&alpha_minus.view()));
        t
    };
    let mass = &one * cplx(m, 0.0);
    let mut hoppings = vec![(vec![0, 0, 0], embed(&mass, &mass))];
    for (j, tj) in tau.iter().enumerate() {
        let plus = (&one + tj) * cplx(0.5, 0.0);
        let minus = (&one - tj) * cplx(0.5, 0.0);
        let mut a = vec![0i64; 3];
        a[j] = 1;
        hoppings.push((a.clone(), embed(&plus, &minus)));
        a[j] = -1;
        hoppings.push((a, embed(&minus, &plus)));
    }
    HoppingModel::new(
        "model3d",
        3,
        4,
        hoppings,
        &sigma_z_frame(2),
        Array2::zeros((3, 3)),
        DisorderSpec::none(),
    )
    .expect("reference 3d model is a valid chiral model")
}

/// Site-mass disorder matrix of the 3d reference model (`[[0, 1], [1, 0]]` in
/// the chiral blocks).
pub fn model3d_mass_matrix() -> CMatrix {
    let mut m = Array2::<C64>::zeros((4, 4));
    for i in 0..2 {
        m[[i, i + 2]] = cplx(1.0, 0.0);
        m[[i + 2, i]] = cplx(1.0, 0.0);
    }
    m
}

/// Parameters selecting a built-in model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    #[serde(default)]
    pub m: f64,
    #[serde(default)]
    pub lambda: f64,
    /// Mass-disorder coupling; defaults to `lambda` when absent.
    #[serde(default)]
    pub lambda_prime: Option<f64>,
}

pub const BUILTIN_MODELS: &[&str] = &["model1", "model2", "model3d"];

pub fn builtin(name: &str, p: &ModelParams) -> Result<HoppingModel> {
    let lp = p.lambda_prime.unwrap_or(p.lambda);
    match name {
        "model1" => Ok(model1(p.m)),
        "model2" => Ok(model2(p.m, p.lambda, lp)),
        "model3d" => {
            let model = model3d_reference(p.m);
            if p.lambda == 0.0 && lp == 0.0 {
                Ok(model)
            } else {
                let mut model = model.with_disorder(DisorderSpec {
                    bond_law: Law::CENTERED_UNIT,
                    bond_coupling: p.lambda,
                    site_law: Law::CENTERED_UNIT,
                    site_coupling: lp,
                    site_matrix: Some(model3d_mass_matrix()),
                })?;
                model.name = "model3d".into();
                Ok(model)
            }
        }
        other => Err(Error::InvalidModel(format!(
            "unknown built-in model '{other}' (known: {})",
            BUILTIN_MODELS.join(", ")
        ))),
    }
}

// ---------------------------------------------------------------- JSON

/// Complex matrix as a row-major list of `[re, im]` pairs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixDoc(pub Vec<[f64; 2]>);

impl MatrixDoc {
    fn to_matrix(&self, n: usize, what: &str) -> Result<CMatrix> {
        if self.0.len() != n * n {
            return Err(Error::InvalidModel(format!(
                "{what}: expected {} entries, got {}",
                n * n,
                self.0.len()
            )));
        }
        Ok(Array2::from_shape_fn((n, n), |(i, j)| {
            let [re, im] = self.0[i * n + j];
            cplx(re, im)
        }))
    }

    pub fn from_matrix(m: &CMatrix) -> Self {
        Self(m.iter().map(|z| [z.re, z.im]).collect())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HoppingDoc {
    pub displacement: Vec<i64>,
    pub matrix: MatrixDoc,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct DisorderDoc {
    #[serde(default)]
    pub bond: Law,
    #[serde(default)]
    pub bond_coupling: f64,
    #[serde(default)]
    pub site: Law,
    #[serde(default)]
    pub site_coupling: f64,
    #[serde(default)]
    pub site_matrix: Option<MatrixDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelDoc {
    #[serde(default = "default_name")]
    pub name: String,
    pub dimension: usize,
    pub orbitals: usize,
    pub hoppings: Vec<HoppingDoc>,
    #[serde(default)]
    pub chiral_frame: Option<MatrixDoc>,
    #[serde(default)]
    pub magnetic_form: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub disorder: Option<DisorderDoc>,
}

fn default_name() -> String {
    "custom".into()
}

impl ModelDoc {
    pub fn into_model(self) -> Result<HoppingModel> {
        let n2 = self.orbitals;
        if n2 == 0 || n2 % 2 != 0 {
            return Err(Error::InvalidModel(format!("orbital count must be even, got {n2}")));
        }
        let frame = match &self.chiral_frame {
            Some(doc) => doc.to_matrix(n2, "chiral_frame")?,
            None => sigma_z_frame(n2 / 2),
        };
        let d = self.dimension;
        let form = match &self.magnetic_form {
            Some(rows) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(Error::InvalidModel(format!("magnetic_form must be {d}x{d}")));
                }
                Array2::from_shape_fn((d, d), |(i, j)| rows[i][j])
            }
            None => Array2::zeros((d, d)),
        };
        let hoppings = self
            .hoppings
            .iter()
            .map(|h| Ok((h.displacement.clone(), h.matrix.to_matrix(n2, "hopping")?)))
            .collect::<Result<Vec<_>>>()?;
        let disorder = match self.disorder {
            Some(doc) => DisorderSpec {
                bond_law: doc.bond,
                bond_coupling: doc.bond_coupling,
                site_law: doc.site,
                site_coupling: doc.site_coupling,
                site_matrix: doc.site_matrix.map(|m| m.to_matrix(n2, "site_matrix")).transpose()?,
            },
            None => DisorderSpec::none(),
        };
        HoppingModel::new(self.name, d, n2, hoppings, &frame, form, disorder)
    }
}

pub fn model_from_json(text: &str) -> Result<HoppingModel> {
    let doc: ModelDoc = serde_json::from_str(text)?;
    doc.into_model()
}

// ---------------------------------------------------------------- disorder

/// Identifies one realization of an ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleSeed {
    pub master: u64,
    pub index: u64,
}

impl SampleSeed {
    pub fn new(master: u64, index: u64) -> Self {
        Self { master, index }
    }
}

/// Uniform deviates addressed by `(master, index, channel, site)`; the value
/// for a given address does not depend on the order of evaluation.
struct CounterStream {
    rng: ChaCha8Rng,
}

impl CounterStream {
    fn new(seed: SampleSeed) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.master.to_le_bytes());
        key[8..16].copy_from_slice(&seed.index.to_le_bytes());
        key[16..24].copy_from_slice(b"oddchern");
        Self { rng: ChaCha8Rng::from_seed(key) }
    }

    fn uniform(&mut self, channel: u64, site: usize) -> f64 {
        self.rng.set_stream(channel);
        self.rng.set_word_pos(2 * site as u128);
        self.rng.random::<f64>()
    }
}

/// Disorder variables of one realization on a torus.
#[derive(Clone, Debug, PartialEq)]
pub struct DisorderConfig {
    /// `bonds[c][x]` is `ω` on the bond `(x, x + a_c)` for the `c`-th canonical displacement.
    pub bonds: Vec<Vec<f64>>,
    /// `sites[x]` is `ω'_x`.
    pub sites: Vec<f64>,
}

impl DisorderConfig {
    pub fn clean(model: &HoppingModel, torus: &Torus) -> Self {
        let v = torus.n_sites();
        Self {
            bonds: vec![vec![0.0; v]; model.canonical_bonds().len()],
            sites: vec![0.0; v],
        }
    }

    pub fn sample(model: &HoppingModel, torus: &Torus, seed: SampleSeed) -> Self {
        let v = torus.n_sites();
        let spec = model.disorder();
        let mut stream = CounterStream::new(seed);
        let sites = (0..v).map(|x| spec.site_law.map(stream.uniform(0, x))).collect();
        let bonds = (0..model.canonical_bonds().len())
            .map(|c| {
                (0..v)
                    .map(|x| spec.bond_law.map(stream.uniform(1 + c as u64, x)))
                    .collect()
            })
            .collect();
        Self { bonds, sites }
    }

    /// The configuration `T_a ω`, i.e. the variable at `x` is the old one at `x - a`.
    pub fn translated(&self, torus: &Torus, a: &[i64]) -> Self {
        let shift = |vals: &Vec<f64>| -> Vec<f64> {
            (0..torus.n_sites())
                .map(|x| {
                    let c: Vec<i64> = torus.coords(x).iter().zip(a).map(|(xi, ai)| xi - ai).collect();
                    vals[torus.index(&c)]
                })
                .collect()
        };
        Self {
            bonds: self.bonds.iter().map(shift).collect(),
            sites: shift(&self.sites),
        }
    }
}

// ---------------------------------------------------------------- realization

/// One finite-torus sample: a dense Hermitian chiral matrix.
#[derive(Clone, Debug)]
pub struct LatticeRealization {
    torus: Torus,
    half_orbitals: usize,
    h: CMatrix,
    seed: Option<SampleSeed>,
    magnetic_form: Array2<f64>,
    model_name: String,
}

/// `x ∧ y = xᵀ Θ y`
fn wedge(form: &Array2<f64>, x: &[i64], y: &[i64]) -> f64 {
    let d = x.len();
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            s += x[i] as f64 * form[[i, j]] * y[j] as f64;
        }
    }
    s
}

fn check_flux(form: &Array2<f64>, size: usize) -> Result<()> {
    let d = form.nrows();
    for i in 0..d {
        for j in i + 1..d {
            let q = form[[i, j]] * size as f64 / std::f64::consts::TAU;
            if (q - q.round()).abs() > 1e-9 {
                return Err(Error::IncommensurateFlux { i, j, flux: form[[i, j]], size });
            }
        }
    }
    Ok(())
}

/// Builds a realization with freshly sampled disorder (or the clean model when
/// `seed` is `None`).
pub fn realize(model: &HoppingModel, size: usize, seed: Option<SampleSeed>) -> Result<LatticeRealization> {
    let torus = Torus::new(model.dim(), size);
    let config = match seed {
        Some(s) if !model.disorder().is_clean() => DisorderConfig::sample(model, &torus, s),
        _ => DisorderConfig::clean(model, &torus),
    };
    realize_with(model, &torus, &config, seed)
}

/// Builds a realization from an explicit disorder configuration.
pub fn realize_with(
    model: &HoppingModel,
    torus: &Torus,
    config: &DisorderConfig,
    seed: Option<SampleSeed>,
) -> Result<LatticeRealization> {
    let size = torus.size();
    let range = model.range();
    if size <= 2 * range {
        return Err(Error::LatticeTooSmall { size, range });
    }
    if torus.dim() != model.dim() {
        return Err(Error::Malformed("torus and model dimensions differ".into()));
    }
    let form = model.magnetic_form();
    check_flux(form, size)?;
    let bonds = model.canonical_bonds();
    if config.bonds.len() != bonds.len() || config.sites.len() != torus.n_sites() {
        return Err(Error::Malformed("disorder configuration does not match model/torus".into()));
    }

    let n = model.half_orbitals();
    let v = torus.n_sites();
    let dim = 2 * n * v;
    let mut h = Array2::<C64>::zeros((dim, dim));
    let row = |o: usize, site: usize| (o / n) * n * v + site * n + o % n;
    let spec = model.disorder();
    let zero: Vec<i64> = vec![0; model.dim()];

    let add_block = |h: &mut CMatrix, x: usize, y: usize, block: &CMatrix, factor: C64| {
        for (i, j) in itertools_pairs(2 * n) {
            let z = block[[i, j]];
            if z != C64::default() {
                h[[row(i, x), row(j, y)]] += z * factor;
            }
        }
    };

    for x in 0..v {
        if let Some(t0) = model.hopping(&zero) {
            add_block(&mut h, x, x, t0, cplx(1.0, 0.0));
        }
        if let Some(m) = &spec.site_matrix {
            let w = spec.site_coupling * config.sites[x];
            if w != 0.0 {
                add_block(&mut h, x, x, m, cplx(w, 0.0));
            }
        }
    }
    for (c, a) in bonds.iter().enumerate() {
        let minus: Vec<i64> = a.iter().map(|v| -v).collect();
        let t_minus = model.hopping(&minus).expect("hoppings are closed under a -> -a");
        let t_plus = model.hopping(a).expect("canonical bond present");
        for x in 0..v {
            let cx = torus.coords(x);
            let shifted: Vec<i64> = cx.iter().zip(a).map(|(p, q)| p + q).collect();
            let y = torus.index(&shifted);
            let cy = torus.coords(y);
            let coef = 1.0 + spec.bond_coupling * config.bonds[c][x];
            // ⟨x|H|y⟩ = e^{i y∧x} t_{x-y} with x - y = -a
            let phase = C64::from_polar(coef, wedge(form, &cy, &cx));
            add_block(&mut h, x, y, t_minus, phase);
            add_block(&mut h, y, x, t_plus, phase.conj());
        }
    }

    Ok(LatticeRealization {
        torus: torus.clone(),
        half_orbitals: n,
        h,
        seed,
        magnetic_form: form.clone(),
        model_name: model.name().to_string(),
    })
}

fn itertools_pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (0..n).map(move |j| (i, j)))
}

impl LatticeRealization {
    /// Wraps an explicit chiral block `A` into `H = [[0, A], [A†, 0]]`.
    pub fn from_chiral_block(torus: Torus, half_orbitals: usize, a: &CMatrix) -> Result<Self> {
        let m = half_orbitals * torus.n_sites();
        if a.dim() != (m, m) {
            return Err(Error::Malformed(format!("chiral block must be {m}x{m}")));
        }
        let mut h = Array2::<C64>::zeros((2 * m, 2 * m));
        h.slice_mut(s![..m, m..]).assign(a);
        h.slice_mut(s![m.., ..m]).assign(&adjoint(&a.view()));
        let d = torus.dim();
        Ok(Self {
            torus,
            half_orbitals,
            h,
            seed: None,
            magnetic_form: Array2::zeros((d, d)),
            model_name: "explicit".into(),
        })
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn half_orbitals(&self) -> usize {
        self.half_orbitals
    }

    /// `N · L^d`, the size of the chiral block.
    pub fn half_dim(&self) -> usize {
        self.half_orbitals * self.torus.n_sites()
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        &self.h
    }

    pub fn chiral_block(&self) -> ArrayView2<'_, C64> {
        let m = self.half_dim();
        self.h.slice(s![..m, m..])
    }

    pub fn seed(&self) -> Option<SampleSeed> {
        self.seed
    }

    pub fn magnetic_form(&self) -> &Array2<f64> {
        &self.magnetic_form
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    /// Matrix row of `(sector, site, orbital)`; sector 0 is the `+1` eigenspace of `S`.
    pub fn row(&self, sector: usize, site: usize, orbital: usize) -> usize {
        sector * self.half_dim() + site * self.half_orbitals + orbital
    }

    pub fn hermiticity_residual(&self) -> f64 {
        hermiticity_residual(&self.h.view())
    }

    /// `max |S H S + H|`.
    pub fn chirality_residual(&self) -> f64 {
        chirality_residual_of(&self.h.view(), self.half_dim())
    }

    /// Eigenvalues by a full Hermitian diagonalization, ascending.
    pub fn spectrum(&self) -> Result<Vec<f64>> {
        Ok(self.h.eigvalsh(UPLO::Lower)?.to_vec())
    }

    /// `V_a H V_a^{-1}` for the magnetic translation `(V_a ψ)(x) = e^{i a∧x} ψ(x - a)`.
    pub fn magnetic_translate(&self, a: &[i64]) -> CMatrix {
        let t = &self.torus;
        let v = t.n_sites();
        let n = self.half_orbitals;
        let src: Vec<usize> = (0..v)
            .map(|x| {
                let c: Vec<i64> = t.coords(x).iter().zip(a).map(|(p, q)| p - q).collect();
                t.index(&c)
            })
            .collect();
        let phase: Vec<C64> = (0..v)
            .map(|x| C64::from_polar(1.0, wedge(&self.magnetic_form, a, &t.coords(x))))
            .collect();
        let dim = self.h.nrows();
        let site_of = |r: usize| (r % (n * v)) / n;
        let remap = |r: usize| {
            let sector = r / (n * v);
            let orb = r % n;
            sector * n * v + src[site_of(r)] * n + orb
        };
        Array2::from_shape_fn((dim, dim), |(r, c)| {
            phase[site_of(r)] * self.h[[remap(r), remap(c)]] * phase[site_of(c)].conj()
        })
    }
}
