//! Reference-set sampling: pick one author and a fixed-size subset of their
//! documents whose total length tracks `sigma` times the source length.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CorpusError, RawDocument};

/// Result of [`sample_reference_set`]. `within_tolerance` is false when no
/// subset of the chosen author's documents lands within ±20% of the target
/// length and the closest achievable subset was returned instead.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSample {
    pub documents: Vec<RawDocument>,
    pub author_id: String,
    pub target_chars: f64,
    pub total_chars: usize,
    pub within_tolerance: bool,
}

const LENGTH_TOLERANCE: f64 = 0.2;
// Exhaustive subset search is capped; larger author corpora are pre-filtered
// to the documents closest to the per-document target length.
const MAX_EXHAUSTIVE_DOCS: usize = 24;

/// Pick a random author with at least `n_exp` documents (excluding the
/// source document itself), then the `n_exp`-subset of their documents whose
/// total character count is closest to `sigma * len(source)`. Ties are broken
/// by lexicographic doc_id order. Deterministic for a fixed `rng_seed`.
pub fn sample_reference_set(
    corpus: &[RawDocument],
    source: &RawDocument,
    n_exp: usize,
    sigma: f64,
    rng_seed: u64,
) -> Result<ReferenceSample, CorpusError> {
    if !(1..=5).contains(&n_exp) {
        return Err(CorpusError::InvalidSamplingParams(format!(
            "n_exp must be in [1, 5], got {n_exp}"
        )));
    }
    if !(sigma > 0.0) {
        return Err(CorpusError::InvalidSamplingParams(format!(
            "sigma must be positive, got {sigma}"
        )));
    }

    // Group by author, sorted for determinism.
    let mut authors: Vec<(&str, Vec<&RawDocument>)> = Vec::new();
    for doc in corpus {
        if doc.doc_id == source.doc_id {
            continue;
        }
        let Some(author) = doc.author_id.as_deref() else {
            continue;
        };
        match authors.binary_search_by(|(a, _)| (*a).cmp(author)) {
            Ok(pos) => authors[pos].1.push(doc),
            Err(pos) => authors.insert(pos, (author, vec![doc])),
        }
    }
    let eligible: Vec<&(&str, Vec<&RawDocument>)> =
        authors.iter().filter(|(_, docs)| docs.len() >= n_exp).collect();
    if eligible.is_empty() {
        return Err(CorpusError::NoEligibleAuthor { n_exp });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (author_id, docs) = eligible[rng.gen_range(0..eligible.len())];

    let target = sigma * source.char_len() as f64;
    let mut candidates: Vec<&RawDocument> = docs.clone();
    candidates.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    if candidates.len() > MAX_EXHAUSTIVE_DOCS {
        let per_doc_target = target / n_exp as f64;
        candidates.sort_by(|a, b| {
            let da = (a.char_len() as f64 - per_doc_target).abs();
            let db = (b.char_len() as f64 - per_doc_target).abs();
            da.partial_cmp(&db)
                .unwrap()
                .then_with(|| a.doc_id.cmp(&b.doc_id))
        });
        candidates.truncate(MAX_EXHAUSTIVE_DOCS);
        candidates.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    }

    let best = best_subset(&candidates, n_exp, target);
    let total_chars: usize = best.iter().map(|d| d.char_len()).sum();
    let within_tolerance = (total_chars as f64 - target).abs() <= LENGTH_TOLERANCE * target;
    if !within_tolerance {
        log::warn!(
            "reference sample for '{}': total {} chars misses target {:.0} by more than {:.0}%",
            source.doc_id,
            total_chars,
            target,
            LENGTH_TOLERANCE * 100.0
        );
    }
    Ok(ReferenceSample {
        documents: best.into_iter().cloned().collect(),
        author_id: author_id.to_string(),
        target_chars: target,
        total_chars,
        within_tolerance,
    })
}

/// Exhaustively enumerate `k`-subsets (candidates are sorted by doc_id, so
/// index order doubles as the lexicographic tie-break) and keep the one whose
/// total length is closest to `target`.
fn best_subset<'a>(candidates: &[&'a RawDocument], k: usize, target: f64) -> Vec<&'a RawDocument> {
    let lens: Vec<usize> = candidates.iter().map(|d| d.char_len()).collect();
    let mut indices: Vec<usize> = (0..k).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let total: usize = indices.iter().map(|&i| lens[i]).sum();
        let diff = (total as f64 - target).abs();
        let better = match &best {
            None => true,
            // Strict improvement only: on ties the first (lexicographically
            // smallest) combination wins because enumeration is ordered.
            Some((best_diff, _)) => diff < *best_diff,
        };
        if better {
            best = Some((diff, indices.clone()));
        }
        if !next_combination(&mut indices, candidates.len()) {
            break;
        }
    }
    let (_, chosen) = best.expect("k <= candidates.len() guarantees one combination");
    chosen.into_iter().map(|i| candidates[i]).collect()
}

/// Advance `indices` to the next k-combination of `0..n` in lexicographic
/// order. Returns false once exhausted.
fn next_combination(indices: &mut [usize], n: usize) -> bool {
    let k = indices.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if indices[i] < n - (k - i) {
            indices[i] += 1;
            for j in i + 1..k {
                indices[j] = indices[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
