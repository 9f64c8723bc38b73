//! Construction of text documents from clinical and genomic inputs.
//!
//! Each patient's document collects: one word per drug administration
//! (canonicalized through a synonym table, rare classes dropped), one copy
//! of a gene word per expression feature the patient is extreme in, and one
//! copy per extreme methylation site of that gene. Gene words must also
//! separate the survival-time groups by a minimum count difference to stay
//! in the vocabulary; drug words are exempt from that filter.

pub mod mixture;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, SurvivalOutcome, Vocabulary};
use crate::error::{Error, Result};
use mixture::{assign_extreme, fit_two_component_mixture, is_multimodal, MixtureFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    Expression,
    Methylation,
}

/// Features × patients value matrix with a missingness mask.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    feature_ids: Vec<String>,
    patient_ids: Vec<String>,
    values: Array2<f64>,
    missing: Array2<bool>,
    pub kind: MatrixKind,
}

impl FeatureMatrix {
    pub fn new(
        feature_ids: Vec<String>,
        patient_ids: Vec<String>,
        rows: Vec<Vec<Option<f64>>>,
        kind: MatrixKind,
    ) -> Result<Self> {
        let (nf, np) = (feature_ids.len(), patient_ids.len());
        if rows.len() != nf || rows.iter().any(|r| r.len() != np) {
            return Err(Error::validation(
                "feature matrix dimensions do not match id lists",
            ));
        }
        let mut seen = BTreeSet::new();
        for f in &feature_ids {
            if !seen.insert(f.as_str()) {
                return Err(Error::Validation(format!("duplicate feature id {f:?}")));
            }
        }
        let mut seen = BTreeSet::new();
        for p in &patient_ids {
            if !seen.insert(p.as_str()) {
                return Err(Error::Validation(format!("duplicate patient id {p:?}")));
            }
        }
        let mut values = Array2::zeros((nf, np));
        let mut missing = Array2::from_elem((nf, np), false);
        for (i, row) in rows.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                match cell {
                    Some(x) => values[(i, j)] = *x,
                    None => {
                        values[(i, j)] = f64::NAN;
                        missing[(i, j)] = true;
                    }
                }
            }
        }
        Ok(FeatureMatrix {
            feature_ids,
            patient_ids,
            values,
            missing,
            kind,
        })
    }

    pub fn feature_ids(&self) -> &[String] {
        &self.feature_ids
    }

    pub fn patient_ids(&self) -> &[String] {
        &self.patient_ids
    }

    pub fn n_features(&self) -> usize {
        self.feature_ids.len()
    }

    pub fn n_patients(&self) -> usize {
        self.patient_ids.len()
    }

    pub fn get(&self, feature: usize, patient: usize) -> Option<f64> {
        if self.missing[(feature, patient)] {
            None
        } else {
            Some(self.values[(feature, patient)])
        }
    }

    fn feature_row(&self, id: &str) -> Option<usize> {
        self.feature_ids.iter().position(|f| f == id)
    }

    fn missing_fraction(&self, patient: usize) -> f64 {
        if self.n_features() == 0 {
            return 0.0;
        }
        let miss = (0..self.n_features())
            .filter(|&f| self.missing[(f, patient)])
            .count();
        miss as f64 / self.n_features() as f64
    }
}

/// Thresholds and knobs for document construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildConfig {
    /// Minor-mode posterior a value must exceed to be called extreme.
    pub extreme_posterior_threshold: f64,
    /// Minimum fraction of the cohort a drug class must reach to be kept.
    pub drug_prevalence_min: f64,
    /// Minimum max-minus-min word-count spread across survival groups
    /// for expression-derived words.
    pub expr_group_diff_min: u32,
    /// Same, for methylation-derived words.
    pub meth_group_diff_min: u32,
    pub n_survival_groups: usize,
    /// Patients missing more than this fraction of either matrix are dropped.
    pub missingness_max: f64,
    /// Master seed; per-feature mixture seeds are derived from it.
    pub seed: u64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            extreme_posterior_threshold: 0.95,
            drug_prevalence_min: 0.10,
            expr_group_diff_min: 10,
            meth_group_diff_min: 15,
            n_survival_groups: 3,
            missingness_max: 0.5,
            seed: 0,
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.extreme_posterior_threshold) {
            return Err(Error::config(
                "extreme_posterior_threshold must be in [0,1)",
            ));
        }
        if !(0.0..=1.0).contains(&self.drug_prevalence_min) {
            return Err(Error::config("drug_prevalence_min must be in [0,1]"));
        }
        if !(0.0..=1.0).contains(&self.missingness_max) {
            return Err(Error::config("missingness_max must be in [0,1]"));
        }
        if self.n_survival_groups < 2 {
            return Err(Error::config("n_survival_groups must be at least 2"));
        }
        Ok(())
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seed for one feature's mixture fit, stable under any fit ordering.
fn feature_seed(master: u64, kind: MatrixKind, feature_id: &str) -> u64 {
    let tag = match kind {
        MatrixKind::Expression => "expr:",
        MatrixKind::Methylation => "meth:",
    };
    master ^ fnv1a64(format!("{tag}{feature_id}").as_bytes())
}

/// Splits the uncensored patients into `n_groups` near-equal groups by
/// survival time (stable sort on (time, patient id); remainder patients go
/// to the earliest groups). Returns the groups as patient-id lists.
pub fn survival_groups(
    outcomes: &BTreeMap<String, SurvivalOutcome>,
    n_groups: usize,
) -> Result<Vec<Vec<String>>> {
    let mut uncensored: Vec<(&String, f64)> = outcomes
        .iter()
        .filter(|(_, o)| o.event)
        .map(|(p, o)| (p, o.time))
        .collect();
    if uncensored.len() < n_groups {
        return Err(Error::Config(format!(
            "{} uncensored patients cannot form {n_groups} survival groups",
            uncensored.len()
        )));
    }
    uncensored.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(b.0)));
    let n = uncensored.len();
    let base = n / n_groups;
    let rem = n % n_groups;
    let mut groups = Vec::with_capacity(n_groups);
    let mut at = 0;
    for g in 0..n_groups {
        let size = base + usize::from(g < rem);
        groups.push(
            uncensored[at..at + size]
                .iter()
                .map(|(p, _)| (*p).clone())
                .collect(),
        );
        at += size;
    }
    Ok(groups)
}

/// Keeps a word iff its group-total counts (over uncensored patients only)
/// have max − min ≥ `threshold`.
pub fn filter_by_survival_groups(
    word_counts: &BTreeMap<String, BTreeMap<String, u32>>,
    outcomes: &BTreeMap<String, SurvivalOutcome>,
    threshold: u32,
    n_groups: usize,
) -> Result<BTreeSet<String>> {
    let groups = survival_groups(outcomes, n_groups)?;
    let mut retained = BTreeSet::new();
    for (word, per_patient) in word_counts {
        let totals: Vec<u32> = groups
            .iter()
            .map(|g| {
                g.iter()
                    .map(|p| per_patient.get(p).copied().unwrap_or(0))
                    .sum()
            })
            .collect();
        let max = *totals.iter().max().unwrap();
        let min = *totals.iter().min().unwrap();
        if max - min >= threshold {
            retained.insert(word.clone());
        }
    }
    Ok(retained)
}

/// One retained feature: its fitted mixture and the patients called extreme.
#[derive(Debug, Clone)]
pub struct FeatureCall {
    pub feature_id: String,
    /// Gene word the feature emits (for methylation, the mapped gene).
    pub word: String,
    pub fit: MixtureFit,
    pub extreme_patients: BTreeSet<String>,
}

/// Output of a document build: the corpus plus everything needed to apply
/// the same barcoding to new patients.
#[derive(Debug, Clone)]
pub struct BuiltDocuments {
    pub corpus: Corpus,
    pub expression_calls: Vec<FeatureCall>,
    pub methylation_calls: Vec<FeatureCall>,
    pub drug_classes: BTreeSet<String>,
    pub excluded_patients: Vec<String>,
    /// Features skipped for too few or degenerate values.
    pub n_skipped_features: usize,
    extreme_posterior_threshold: f64,
}

struct Candidate {
    feature_id: String,
    word: String,
    fit: MixtureFit,
    extreme_patients: BTreeSet<String>,
}

/// Fits mixtures for the candidate features of one matrix and returns the
/// extreme calls. `cohort` gives (patient id, column) pairs to use.
fn call_matrix(
    matrix: &FeatureMatrix,
    words: &[String], // word emitted per feature, parallel to feature rows
    cohort: &[(String, usize)],
    config: &BuildConfig,
) -> (Vec<Candidate>, usize) {
    let results: Vec<Option<Candidate>> = (0..matrix.n_features())
        .into_par_iter()
        .map(|f| {
            let vals: Vec<(usize, f64)> = cohort
                .iter()
                .enumerate()
                .filter_map(|(ci, (_, col))| matrix.get(f, *col).map(|x| (ci, x)))
                .collect();
            let xs: Vec<f64> = vals.iter().map(|&(_, x)| x).collect();
            let seed = feature_seed(config.seed, matrix.kind, &matrix.feature_ids[f]);
            let fit = match fit_two_component_mixture(&xs, seed) {
                Ok(fit) => fit,
                Err(_) => return None, // too few / degenerate: feature skipped
            };
            if !is_multimodal(&fit) {
                return Some(Candidate {
                    feature_id: matrix.feature_ids[f].clone(),
                    word: words[f].clone(),
                    fit,
                    extreme_patients: BTreeSet::new(),
                });
            }
            let extreme_patients = vals
                .iter()
                .filter(|&&(_, x)| {
                    assign_extreme(&fit, x, config.extreme_posterior_threshold).unwrap()
                })
                .map(|&(ci, _)| cohort[ci].0.clone())
                .collect();
            Some(Candidate {
                feature_id: matrix.feature_ids[f].clone(),
                word: words[f].clone(),
                fit,
                extreme_patients,
            })
        })
        .collect();

    let n_skipped = results.iter().filter(|r| r.is_none()).count();
    let candidates = results
        .into_iter()
        .flatten()
        // Unimodal features never emit words; keep only multimodal calls.
        .filter(|c| is_multimodal(&c.fit))
        .collect();
    (candidates, n_skipped)
}

fn counts_by_word(candidates: &[Candidate]) -> BTreeMap<String, BTreeMap<String, u32>> {
    let mut counts: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
    for c in candidates {
        let per_patient = counts.entry(c.word.clone()).or_default();
        for p in &c.extreme_patients {
            *per_patient.entry(p.clone()).or_insert(0) += 1;
        }
    }
    counts
}

fn canonical_drug<'a>(synonyms: &'a HashMap<String, String>, raw: &'a str) -> &'a str {
    synonyms.get(raw).map(String::as_str).unwrap_or(raw)
}

/// Builds the training corpus. See the module docs for the pipeline; the
/// returned [`BuiltDocuments`] also carries the fitted mixtures so the same
/// rules can be applied to held-out patients with [`BuiltDocuments::apply`].
pub fn build_documents(
    clinical: &[(String, String)],
    expression: &FeatureMatrix,
    methylation: &FeatureMatrix,
    site_to_gene: &HashMap<String, String>,
    synonyms: &HashMap<String, String>,
    outcomes: &BTreeMap<String, SurvivalOutcome>,
    config: &BuildConfig,
) -> Result<BuiltDocuments> {
    config.validate()?;
    if expression.kind != MatrixKind::Expression || methylation.kind != MatrixKind::Methylation {
        return Err(Error::validation("matrix kinds are swapped"));
    }
    // Every methylation site must map to a gene.
    let mut meth_words = Vec::with_capacity(methylation.n_features());
    for site in methylation.feature_ids() {
        match site_to_gene.get(site) {
            Some(gene) => meth_words.push(gene.clone()),
            None => {
                return Err(Error::Validation(format!(
                    "methylation site {site:?} has no gene mapping"
                )))
            }
        }
    }

    // Cohort: patients measured on both platforms, in expression column
    // order. All of them need outcomes.
    let meth_col: HashMap<&str, usize> = methylation
        .patient_ids()
        .iter()
        .enumerate()
        .map(|(j, p)| (p.as_str(), j))
        .collect();
    let mut cohort: Vec<(String, usize, usize)> = Vec::new(); // (id, expr col, meth col)
    for (je, p) in expression.patient_ids().iter().enumerate() {
        if let Some(&jm) = meth_col.get(p.as_str()) {
            if !outcomes.contains_key(p) {
                return Err(Error::Validation(format!(
                    "patient {p:?} appears in the matrices but not in the outcomes table"
                )));
            }
            cohort.push((p.clone(), je, jm));
        }
    }

    // Drop patients missing too much of either platform.
    let mut excluded_patients = Vec::new();
    cohort.retain(|(p, je, jm)| {
        let keep = expression.missing_fraction(*je) <= config.missingness_max
            && methylation.missing_fraction(*jm) <= config.missingness_max;
        if !keep {
            excluded_patients.push(p.clone());
        }
        keep
    });

    let cohort_ids: BTreeSet<&str> = cohort.iter().map(|(p, _, _)| p.as_str()).collect();
    let cohort_outcomes: BTreeMap<String, SurvivalOutcome> = cohort
        .iter()
        .map(|(p, _, _)| (p.clone(), outcomes[p]))
        .collect();

    // Drug classes and their prevalence over the cohort.
    let mut class_patients: BTreeMap<String, BTreeSet<&str>> = BTreeMap::new();
    for (p, raw) in clinical {
        if cohort_ids.contains(p.as_str()) {
            class_patients
                .entry(canonical_drug(synonyms, raw).to_owned())
                .or_default()
                .insert(p.as_str());
        }
    }
    let n_cohort = cohort.len().max(1);
    let drug_classes: BTreeSet<String> = class_patients
        .iter()
        .filter(|(_, ps)| ps.len() as f64 / n_cohort as f64 >= config.drug_prevalence_min)
        .map(|(c, _)| c.clone())
        .collect();

    // Mixture fits and extreme calls, one candidate per multimodal feature.
    let expr_cohort: Vec<(String, usize)> =
        cohort.iter().map(|(p, je, _)| (p.clone(), *je)).collect();
    let meth_cohort: Vec<(String, usize)> =
        cohort.iter().map(|(p, _, jm)| (p.clone(), *jm)).collect();
    let expr_words: Vec<String> = expression.feature_ids().to_vec();
    let (expr_cands, skipped_e) = call_matrix(expression, &expr_words, &expr_cohort, config);
    let (meth_cands, skipped_m) = call_matrix(methylation, &meth_words, &meth_cohort, config);

    // Survival-group frequency filter, per source. Drug words are exempt.
    let retained_expr = filter_by_survival_groups(
        &counts_by_word(&expr_cands),
        &cohort_outcomes,
        config.expr_group_diff_min,
        config.n_survival_groups,
    )?;
    let retained_meth = filter_by_survival_groups(
        &counts_by_word(&meth_cands),
        &cohort_outcomes,
        config.meth_group_diff_min,
        config.n_survival_groups,
    )?;

    let to_calls = |cands: Vec<Candidate>, retained: &BTreeSet<String>| -> Vec<FeatureCall> {
        cands
            .into_iter()
            .filter(|c| retained.contains(&c.word))
            .map(|c| FeatureCall {
                feature_id: c.feature_id,
                word: c.word,
                fit: c.fit,
                extreme_patients: c.extreme_patients,
            })
            .collect()
    };
    let expression_calls = to_calls(expr_cands, &retained_expr);
    let methylation_calls = to_calls(meth_cands, &retained_meth);

    // Vocabulary: drug classes, then expression words, then methylation
    // words (each alphabetical, deduplicated).
    let vocabulary = Vocabulary::from_union(
        drug_classes
            .iter()
            .map(String::as_str)
            .chain(retained_expr.iter().map(String::as_str))
            .chain(retained_meth.iter().map(String::as_str)),
    )?;

    let mut built = BuiltDocuments {
        corpus: Corpus {
            vocabulary,
            documents: Vec::new(),
        },
        expression_calls,
        methylation_calls,
        drug_classes,
        excluded_patients,
        n_skipped_features: skipped_e + skipped_m,
        extreme_posterior_threshold: config.extreme_posterior_threshold,
    };
    let cohort_order: Vec<String> = cohort.iter().map(|(p, _, _)| p.clone()).collect();
    built.corpus.documents = built.documents_for(
        &cohort_order,
        clinical,
        synonyms,
        expression,
        methylation,
        &cohort_outcomes,
    )?;
    built.corpus.validate()?;
    Ok(built)
}

impl BuiltDocuments {
    /// Assembles documents for `patients` using this build's drug classes,
    /// mixture fits, threshold, and vocabulary. Used both for the training
    /// cohort and to barcode held-out patients with training-set fits.
    pub fn documents_for(
        &self,
        patients: &[String],
        clinical: &[(String, String)],
        synonyms: &HashMap<String, String>,
        expression: &FeatureMatrix,
        methylation: &FeatureMatrix,
        outcomes: &BTreeMap<String, SurvivalOutcome>,
    ) -> Result<Vec<Document>> {
        let expr_col: HashMap<&str, usize> = expression
            .patient_ids()
            .iter()
            .enumerate()
            .map(|(j, p)| (p.as_str(), j))
            .collect();
        let meth_col: HashMap<&str, usize> = methylation
            .patient_ids()
            .iter()
            .enumerate()
            .map(|(j, p)| (p.as_str(), j))
            .collect();

        let mut drugs_of: HashMap<&str, Vec<&str>> = HashMap::new();
        for (p, raw) in clinical {
            let class = canonical_drug(synonyms, raw);
            if self.drug_classes.contains(class) {
                drugs_of.entry(p.as_str()).or_default().push(class);
            }
        }

        let mut documents = Vec::with_capacity(patients.len());
        for p in patients {
            let mut words: Vec<&str> = Vec::new();
            if let Some(ds) = drugs_of.get(p.as_str()) {
                words.extend(ds.iter().copied());
            }
            for (calls, matrix, col) in [
                (&self.expression_calls, expression, expr_col.get(p.as_str())),
                (
                    &self.methylation_calls,
                    methylation,
                    meth_col.get(p.as_str()),
                ),
            ] {
                let Some(&col) = col else { continue };
                for call in calls.iter() {
                    let Some(row) = matrix.feature_row(&call.feature_id) else {
                        continue; // feature absent from this matrix
                    };
                    if let Some(x) = matrix.get(row, col) {
                        if assign_extreme(&call.fit, x, self.extreme_posterior_threshold)? {
                            words.push(&call.word);
                        }
                    }
                }
            }
            let mut tokens = Vec::with_capacity(words.len());
            for w in words {
                match self.corpus.vocabulary.index_of(w) {
                    Some(v) => tokens.push(v),
                    None => {
                        return Err(Error::Validation(format!(
                            "word {w:?} missing from the built vocabulary"
                        )))
                    }
                }
            }
            documents.push(Document {
                id: p.clone(),
                tokens,
                outcome: outcomes.get(p).copied(),
            });
        }
        Ok(documents)
    }
}

fn open_lines(path: &Path) -> Result<impl Iterator<Item = std::io::Result<String>>> {
    Ok(BufReader::new(File::open(path)?).lines())
}

fn split_tsv(line: &str) -> Vec<&str> {
    line.trim_end_matches('\r').split('\t').collect()
}

/// Reads a features × patients TSV: header row of patient ids (first cell
/// is a label), then one row per feature. "NA" or an empty cell is missing.
pub fn read_feature_matrix(path: impl AsRef<Path>, kind: MatrixKind) -> Result<FeatureMatrix> {
    let mut lines = open_lines(path.as_ref())?;
    let header = match lines.next() {
        Some(l) => l?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty matrix file".into(),
            })
        }
    };
    let patient_ids: Vec<String> = split_tsv(&header)
        .into_iter()
        .skip(1)
        .map(str::to_owned)
        .collect();
    let mut feature_ids = Vec::new();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_tsv(&line);
        if fields.len() != patient_ids.len() + 1 {
            return Err(Error::Parse {
                line: lineno,
                message: format!(
                    "expected {} columns, found {}",
                    patient_ids.len() + 1,
                    fields.len()
                ),
            });
        }
        feature_ids.push(fields[0].to_owned());
        let mut row = Vec::with_capacity(patient_ids.len());
        for cell in &fields[1..] {
            if *cell == "NA" || cell.is_empty() {
                row.push(None);
            } else {
                let x: f64 = cell.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("bad numeric value {cell:?}"),
                })?;
                row.push(Some(x));
            }
        }
        rows.push(row);
    }
    FeatureMatrix::new(feature_ids, patient_ids, rows, kind)
}

/// Reads the clinical table: one `patient<TAB>drug` row per administration.
pub fn read_clinical(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in open_lines(path.as_ref())?.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_tsv(&line);
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: i + 1,
                message: "expected patient<TAB>drug".into(),
            });
        }
        out.push((fields[0].to_owned(), fields[1].to_owned()));
    }
    Ok(out)
}

/// Reads a two-column TSV mapping (raw drug → canonical class, or
/// methylation site → gene). Repeating a key is fine as long as it always
/// maps to the same value.
pub fn read_two_column_map(path: impl AsRef<Path>) -> Result<HashMap<String, String>> {
    let mut out = HashMap::new();
    for (i, line) in open_lines(path.as_ref())?.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_tsv(&line);
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: i + 1,
                message: "expected key<TAB>value".into(),
            });
        }
        if let Some(old) = out.insert(fields[0].to_owned(), fields[1].to_owned()) {
            if old != fields[1] {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!(
                        "key {:?} mapped to both {old:?} and {:?}",
                        fields[0], fields[1]
                    ),
                });
            }
        }
    }
    Ok(out)
}

/// Reads outcomes: `patient<TAB>time<TAB>event` with event ∈ {0,1,true,false}.
pub fn read_outcomes(path: impl AsRef<Path>) -> Result<BTreeMap<String, SurvivalOutcome>> {
    let mut out = BTreeMap::new();
    for (i, line) in open_lines(path.as_ref())?.enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_tsv(&line);
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                message: "expected patient<TAB>time<TAB>event".into(),
            });
        }
        let time: f64 = fields[1].parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("bad time {:?}", fields[1]),
        })?;
        let event = match fields[2] {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("bad event flag {other:?}"),
                })
            }
        };
        if out
            .insert(fields[0].to_owned(), SurvivalOutcome::new(time, event)?)
            .is_some()
        {
            return Err(Error::Parse {
                line: lineno,
                message: format!("duplicate outcome for patient {:?}", fields[0]),
            });
        }
    }
    Ok(out)
}

/// Reads background-topic word weights: `word<TAB>weight`, one word per line.
pub fn read_background(path: impl AsRef<Path>) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (i, line) in open_lines(path.as_ref())?.enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields = split_tsv(&line);
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: lineno,
                message: "expected word<TAB>weight".into(),
            });
        }
        let weight: f64 = fields[1].parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("bad weight {:?}", fields[1]),
        })?;
        if out.insert(fields[0].to_owned(), weight).is_some() {
            return Err(Error::Parse {
                line: lineno,
                message: format!("duplicate word {:?}", fields[0]),
            });
        }
    }
    Ok(out)
}
