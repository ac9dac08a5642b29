//! Word-embedding sets: loading, validation, vocabulary intersection and
//! standardization.
//!
//! An [`EmbeddingSet`] keeps its vocabulary sorted lexicographically and its
//! vectors as the rows of one dense matrix, so every downstream consumer
//! (feature building, fold assignment, reductions, reports) sees the same
//! deterministic order.
//!
//! The on-disk format is the usual text layout of released embeddings: one
//! record per line, a word token followed by its coordinates, fields separated
//! by spaces or tabs. Lines starting with `#` are comments.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// A named map from words to vectors of a fixed dimensionality.
///
/// Immutable once built; every vector is finite and every word is a
/// non-empty token without whitespace.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    name: String,
    words: Vec<String>,
    vectors: Array2<f64>,
}

impl EmbeddingSet {
    /// Builds a set from `(word, vector)` entries. Duplicate words are an
    /// error; use [`collapse_prototypes`] first for multi-prototype input.
    pub fn from_entries<I>(name: impl Into<String>, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        let mut map = BTreeMap::new();
        for (word, vector) in entries {
            if map.contains_key(&word) {
                return Err(Error::InvalidEmbeddings(format!("duplicate word {word:?}")));
            }
            map.insert(word, vector);
        }
        Self::from_map(name.into(), map)
    }

    fn from_map(name: String, map: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        let dim = match map.values().next() {
            Some(v) => v.len(),
            None => return Err(Error::InvalidEmbeddings("no entries".into())),
        };
        let mut words = Vec::with_capacity(map.len());
        let mut flat = Vec::with_capacity(map.len() * dim);
        for (word, vector) in map {
            if vector.len() != dim {
                return Err(Error::InvalidEmbeddings(format!(
                    "word {word:?} has {} dimensions, expected {dim}",
                    vector.len()
                )));
            }
            words.push(word);
            flat.extend(vector);
        }
        let vectors = Array2::from_shape_vec((words.len(), dim), flat)
            .expect("shape matches collected data");
        Self::from_sorted(name, words, vectors)
    }

    /// Validates and wraps already sorted, unique words and their matrix.
    fn from_sorted(name: String, words: Vec<String>, vectors: Array2<f64>) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::InvalidEmbeddings("no entries".into()));
        }
        if vectors.ncols() == 0 {
            return Err(Error::InvalidEmbeddings("dimension must be at least 1".into()));
        }
        debug_assert_eq!(words.len(), vectors.nrows());
        debug_assert!(words.windows(2).all(|w| w[0] < w[1]));
        for word in &words {
            if word.is_empty() || word.chars().any(char::is_whitespace) {
                return Err(Error::InvalidEmbeddings(format!("invalid word token {word:?}")));
            }
        }
        if let Some(pos) = vectors.iter().position(|v| !v.is_finite()) {
            let word = &words[pos / vectors.ncols()];
            return Err(Error::InvalidEmbeddings(format!("non-finite value in {word:?}")));
        }
        Ok(EmbeddingSet {
            name,
            words,
            vectors: vectors.as_standard_layout().into_owned(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Vocabulary in lexicographic order.
    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// One row per word, in the order of [`words`](Self::words).
    pub fn vectors(&self) -> ArrayView2<'_, f64> {
        self.vectors.view()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.position(word).is_some()
    }

    fn position(&self, word: &str) -> Option<usize> {
        self.words.binary_search_by(|w| w.as_str().cmp(word)).ok()
    }

    /// The stored vector for `word`, or `None`. There is no fallback vector
    /// for unknown words.
    pub fn lookup(&self, word: &str) -> Option<&[f64]> {
        let row = self.position(word)?;
        let dim = self.dim();
        let flat = self.vectors.as_slice().expect("standard layout");
        Some(&flat[row * dim..(row + 1) * dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> + '_ {
        let flat = self.vectors.as_slice().expect("standard layout");
        self.words
            .iter()
            .zip(flat.chunks_exact(self.dim()))
            .map(|(w, v)| (w.as_str(), v))
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Same vocabulary with a replacement matrix (one row per word, any
    /// positive column count). Used by the reductions.
    pub fn with_vectors(&self, vectors: Array2<f64>) -> Result<Self> {
        if vectors.nrows() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: vectors.nrows(),
            });
        }
        Self::from_sorted(self.name.clone(), self.words.clone(), vectors)
    }

    /// Restricts the set to `words`, which must be sorted, unique and all
    /// present.
    fn restrict_sorted(&self, words: &[String]) -> Self {
        let rows: Vec<usize> = words
            .iter()
            .map(|w| self.position(w).expect("restricting to a known word"))
            .collect();
        EmbeddingSet {
            name: self.name.clone(),
            words: words.to_vec(),
            vectors: self.vectors.select(Axis(0), &rows),
        }
    }

    /// Smallest and largest coordinate over the whole set.
    pub fn value_range(&self) -> (f64, f64) {
        self.vectors
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Largest absolute coordinate over the whole set.
    pub fn max_abs(&self) -> f64 {
        self.vectors.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Averages the prototypes of every repeated word. Each output vector is the
/// entrywise sum of that word's records divided by their count.
pub fn collapse_prototypes(
    records: impl IntoIterator<Item = (String, Vec<f64>)>,
) -> Result<Vec<(String, Vec<f64>)>> {
    let mut sums: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    for (word, vector) in records {
        match sums.get_mut(&word) {
            Some((sum, count)) => {
                if sum.len() != vector.len() {
                    return Err(Error::InvalidEmbeddings(format!(
                        "prototypes of {word:?} differ in length"
                    )));
                }
                for (s, v) in sum.iter_mut().zip(&vector) {
                    *s += v;
                }
                *count += 1;
            }
            None => {
                sums.insert(word, (vector, 1));
            }
        }
    }
    Ok(sums
        .into_iter()
        .map(|(word, (sum, count))| {
            let mean = sum.into_iter().map(|s| s / count as f64).collect();
            (word, mean)
        })
        .collect())
}

/// Reads an embedding file. With `collapse` set, repeated words are treated
/// as prototypes of one word and averaged; otherwise they are an error.
///
/// The set is named after the file stem.
pub fn load_embeddings(path: impl AsRef<Path>, collapse: bool) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "embeddings".to_owned());
    read_embeddings_from(BufReader::new(file), path, collapse).map(|s| s.with_name(name))
}

/// Reads embeddings from any buffered reader; `name` labels the set and
/// error messages.
pub fn read_embeddings<R: BufRead>(reader: R, name: &str, collapse: bool) -> Result<EmbeddingSet> {
    read_embeddings_from(reader, Path::new(name), collapse).map(|s| s.with_name(name))
}

fn read_embeddings_from<R: BufRead>(reader: R, path: &Path, collapse: bool) -> Result<EmbeddingSet> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut records: Vec<(String, Vec<f64>)> = Vec::new();
    let mut dim = None;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split([' ', '\t']).filter(|f| !f.is_empty());
        let word = fields.next().expect("non-blank line has a field").to_owned();
        let vector = fields
            .map(|tok| match tok.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                Ok(_) => Err(parse_err(lineno, format!("non-finite value {tok:?}"))),
                Err(_) => Err(parse_err(lineno, format!("non-numeric token {tok:?}"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        if vector.is_empty() {
            return Err(parse_err(lineno, format!("word {word:?} has no values")));
        }
        match dim {
            None => dim = Some(vector.len()),
            Some(d) if d != vector.len() => {
                return Err(parse_err(
                    lineno,
                    format!("ragged vector: {} values, expected {d}", vector.len()),
                ));
            }
            Some(_) => {}
        }
        records.push((word, vector));
    }
    if records.is_empty() {
        return Err(parse_err(0, "no embedding records".into()));
    }

    let name = path.to_string_lossy().into_owned();
    if collapse {
        EmbeddingSet::from_entries(name, collapse_prototypes(records)?)
    } else {
        EmbeddingSet::from_entries(name, records)
    }
}

/// Writes the set in the text format: single-space separators, 9
/// significant digits, LF line endings, lexicographic word order.
pub fn write_embeddings<W: Write>(set: &EmbeddingSet, mut writer: W) -> Result<()> {
    let mut line = String::new();
    for (word, vector) in set.iter() {
        if word.starts_with('#') {
            return Err(Error::InvalidEmbeddings(format!(
                "word {word:?} would be read back as a comment"
            )));
        }
        line.clear();
        line.push_str(word);
        for &v in vector {
            line.push(' ');
            line.push_str(&format_significant(v));
        }
        line.push('\n');
        writer
            .write_all(line.as_bytes())
            .map_err(|e| Error::io(set.name(), e))?;
    }
    writer.flush().map_err(|e| Error::io(set.name(), e))
}

pub fn save_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_embeddings(set, BufWriter::new(file))
}

/// `%.9g`-style formatting: 9 significant digits, trailing zeros removed,
/// scientific notation outside `[1e-5, 1e9)`.
pub(crate) fn format_significant(x: f64) -> String {
    const DIGITS: i32 = 9;
    if x == 0.0 {
        return "0".to_owned();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_fraction(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_fraction(mantissa.to_owned()))
    }
}

fn trim_fraction(mut s: String) -> String {
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

/// Restricts every set to the words present in all of them.
pub fn intersect_vocab(sets: &[EmbeddingSet]) -> Result<Vec<EmbeddingSet>> {
    let Some((first, rest)) = sets.split_first() else {
        return Err(Error::InvalidEmbeddings("no embedding sets to intersect".into()));
    };
    let shared: Vec<String> = first
        .words()
        .iter()
        .filter(|w| rest.iter().all(|s| s.contains(w)))
        .cloned()
        .collect();
    if shared.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    Ok(sets.iter().map(|s| s.restrict_sorted(&shared)).collect())
}

/// Shifts and scales each dimension to mean 0 and population standard
/// deviation 1 across the vocabulary. Constant dimensions become zeros.
pub fn standardize(set: &EmbeddingSet) -> Result<EmbeddingSet> {
    if set.len() < 2 {
        return Err(Error::InvalidEmbeddings(
            "standardization needs at least 2 entries".into(),
        ));
    }
    let n = set.len() as f64;
    let mut out = set.vectors().to_owned();
    for mut column in out.columns_mut() {
        let mean = column.sum() / n;
        let var = column.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        let scale = column.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        // Rounding in the mean leaves a tiny spread on constant columns.
        if std <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            column.fill(0.0);
        } else {
            column.mapv_inplace(|v| (v - mean) / std);
        }
    }
    set.with_vectors(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn read(text: &str, collapse: bool) -> Result<EmbeddingSet> {
        read_embeddings(text.as_bytes(), "test", collapse)
    }

    fn set(entries: &[(&str, &[f64])]) -> EmbeddingSet {
        EmbeddingSet::from_entries(
            "s",
            entries.iter().map(|(w, v)| (w.to_string(), v.to_vec())),
        )
        .unwrap()
    }

    #[test]
    fn collapses_prototypes_to_their_mean() {
        let s = read("cat 0.1 0.2\ndog 0.3 0.4\ncat 0.5 0.6\n", true).unwrap();
        assert_eq!(s.len(), 2);
        let cat = s.lookup("cat").unwrap();
        assert_abs_diff_eq!(cat[0], 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(cat[1], 0.4, epsilon = 1e-12);
        assert_eq!(s.lookup("dog").unwrap(), &[0.3, 0.4]);
    }

    #[test]
    fn duplicate_without_collapse_is_an_error() {
        let err = read("cat 0.1 0.2\ncat 0.5 0.6\n", false).unwrap_err();
        assert!(matches!(err, Error::InvalidEmbeddings(_)), "{err}");
    }

    #[test]
    fn ragged_lengths_are_rejected() {
        let err = read("a 1.0\nb 2.0 3.0\n", false).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(read("", false).is_err());
        assert!(read("# only a comment\n\n", false).is_err());
    }

    #[test]
    fn bad_tokens_are_rejected() {
        assert!(read("a 1.0 x\n", false).is_err());
        assert!(read("a 1.0 NaN\n", false).is_err());
        assert!(read("a inf\n", false).is_err());
        assert!(read("a\n", false).is_err());
    }

    #[test]
    fn accepts_crlf_tabs_comments_and_scientific_notation() {
        let s = read("# header\r\nb\t1e-3  2.5E2\r\n\r\na -0.5\t\t0\r\n", false).unwrap();
        assert_eq!(s.words(), ["a", "b"]);
        assert_eq!(s.lookup("b").unwrap(), &[1e-3, 250.0]);
    }

    #[test]
    fn lookup_absent_words() {
        let s = read("cat 0.1 0.2\n", false).unwrap();
        assert_eq!(s.lookup("cat").unwrap(), &[0.1, 0.2]);
        assert!(s.lookup("unicorn").is_none());
        assert!(s.lookup("").is_none());
    }

    #[test]
    fn from_entries_validates() {
        assert!(EmbeddingSet::from_entries("s", Vec::new()).is_err());
        assert!(EmbeddingSet::from_entries("s", vec![(String::new(), vec![1.0])]).is_err());
        assert!(EmbeddingSet::from_entries("s", vec![("a b".into(), vec![1.0])]).is_err());
        assert!(EmbeddingSet::from_entries("s", vec![("a".into(), vec![])]).is_err());
        assert!(EmbeddingSet::from_entries("s", vec![("a".into(), vec![f64::NAN])]).is_err());
    }

    #[test]
    fn write_format() {
        let s = set(&[("b", &[0.1, -2.0]), ("a", &[1234567891.0, 1.5e-7])]);
        let mut buf = Vec::new();
        write_embeddings(&s, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "a 1.23456789e9 1.5e-7\nb 0.1 -2\n"
        );
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_significant(0.0), "0");
        assert_eq!(format_significant(1.0 / 3.0), "0.333333333");
        assert_eq!(format_significant(-123.456), "-123.456");
        assert_eq!(format_significant(1e-5), "0.00001");
        assert_eq!(format_significant(1.25e-6), "1.25e-6");
        assert_eq!(format_significant(999_999_999.6), "1e9");
        assert_eq!(format_significant(100.0), "100");
    }

    #[test]
    fn comment_like_words_cannot_be_written() {
        let s = set(&[("#tag", &[1.0])]);
        assert!(write_embeddings(&s, Vec::new()).is_err());
    }

    #[test]
    fn intersection_restricts_all_sets() {
        let a = set(&[("a", &[1.0]), ("b", &[2.0]), ("c", &[3.0])]);
        let b = set(&[("b", &[5.0, 5.0]), ("c", &[6.0, 6.0]), ("d", &[7.0, 7.0])]);
        let out = intersect_vocab(&[a, b]).unwrap();
        assert_eq!(out[0].words(), ["b", "c"]);
        assert_eq!(out[1].words(), ["b", "c"]);
        assert_eq!(out[1].lookup("c").unwrap(), &[6.0, 6.0]);
    }

    #[test]
    fn intersection_of_one_set_is_identity() {
        let a = set(&[("a", &[1.0]), ("b", &[2.0])]);
        assert_eq!(intersect_vocab(std::slice::from_ref(&a)).unwrap(), vec![a]);
    }

    #[test]
    fn intersection_errors() {
        assert!(intersect_vocab(&[]).is_err());
        let a = set(&[("a", &[1.0])]);
        let b = set(&[("b", &[1.0])]);
        assert!(matches!(intersect_vocab(&[a, b]), Err(Error::EmptyIntersection)));
    }

    #[test]
    fn standardize_examples() {
        let s = standardize(&set(&[("a", &[1.0]), ("b", &[3.0])])).unwrap();
        assert_eq!(s.lookup("a").unwrap(), &[-1.0]);
        assert_eq!(s.lookup("b").unwrap(), &[1.0]);

        let s = standardize(&set(&[("a", &[5.0]), ("b", &[5.0])])).unwrap();
        assert_eq!(s.lookup("a").unwrap(), &[0.0]);

        let s = standardize(&set(&[("a", &[0.0, 10.0]), ("b", &[2.0, 10.0])])).unwrap();
        assert_eq!(s.lookup("a").unwrap(), &[-1.0, 0.0]);
        assert_eq!(s.lookup("b").unwrap(), &[1.0, 0.0]);

        let s = standardize(&set(&[("a", &[0.1]), ("b", &[0.1]), ("c", &[0.1])])).unwrap();
        assert!(s.vectors().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn standardize_needs_two_entries() {
        assert!(standardize(&set(&[("a", &[1.0])])).is_err());
    }
}
