//! Translation edit rate with greedy phrase shifts.
//!
//! Per segment the hypothesis is repeatedly rewritten by the single phrase
//! shift that most reduces its word-level edit distance to the reference.
//! A phrase is only shifted when it occurs verbatim in the reference and is
//! misaligned on both sides. Each shift costs one edit; the residual edit
//! distance is added once no shift helps.
//!
//! Ties between equally good shifts go to the shorter move, then to the
//! earlier phrase start, then to the earlier destination.

use rayon::prelude::*;

use super::{MetricsError, TokenizedPair};

/// Longest phrase that may be shifted.
pub const MAX_SHIFT_LEN: usize = 10;
/// Candidate shifts examined per step before settling for the best so far.
pub const MAX_SHIFT_CANDIDATES: usize = 1000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TerEdits {
    pub shifts: usize,
    pub edit_distance: usize,
    pub ref_len: usize,
}

impl TerEdits {
    pub fn total(&self) -> usize {
        self.shifts + self.edit_distance
    }

    /// Edits over reference length; an empty reference scores 1 if any
    /// edit is needed and 0 otherwise.
    pub fn rate(&self) -> f64 {
        rate(self.total(), self.ref_len)
    }
}

fn rate(edits: usize, ref_len: usize) -> f64 {
    if ref_len > 0 {
        edits as f64 / ref_len as f64
    } else if edits > 0 {
        1.0
    } else {
        0.0
    }
}

/// Word-level Levenshtein distance with unit costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Match,
    Sub,
    /// Hypothesis word with no reference counterpart.
    HypExtra,
    /// Reference word missing from the hypothesis.
    RefMissing,
}

/// Minimal edit script from hypothesis to reference, in forward order.
fn edit_trace<T: PartialEq>(hyp: &[T], reference: &[T]) -> (usize, Vec<Op>) {
    let (n, m) = (hyp.len(), reference.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        d[i * w] = i;
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(hyp[i - 1] != reference[j - 1]);
            d[i * w + j] = sub.min(d[(i - 1) * w + j] + 1).min(d[i * w + j - 1] + 1);
        }
    }
    let mut ops = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let same = hyp[i - 1] == reference[j - 1];
            if here == d[(i - 1) * w + j - 1] + usize::from(!same) {
                ops.push(if same { Op::Match } else { Op::Sub });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == d[(i - 1) * w + j] + 1 {
            ops.push(Op::HypExtra);
            i -= 1;
        } else {
            ops.push(Op::RefMissing);
            j -= 1;
        }
    }
    ops.reverse();
    (d[n * w + m], ops)
}

struct Alignment {
    /// For each reference position, the hypothesis position it aligns to
    /// (or the last hypothesis position before it; -1 at the start).
    ref_to_hyp: Vec<isize>,
    hyp_err: Vec<bool>,
    ref_err: Vec<bool>,
}

fn alignment(ops: &[Op], n: usize, m: usize) -> Alignment {
    let mut a = Alignment {
        ref_to_hyp: vec![-1; m],
        hyp_err: Vec::with_capacity(n),
        ref_err: Vec::with_capacity(m),
    };
    let (mut h, mut r) = (-1isize, -1isize);
    for op in ops {
        match op {
            Op::Match | Op::Sub => {
                h += 1;
                r += 1;
                a.ref_to_hyp[r as usize] = h;
                let err = *op == Op::Sub;
                a.hyp_err.push(err);
                a.ref_err.push(err);
            }
            Op::HypExtra => {
                h += 1;
                a.hyp_err.push(true);
            }
            Op::RefMissing => {
                r += 1;
                a.ref_to_hyp[r as usize] = h;
                a.ref_err.push(true);
            }
        }
    }
    a
}

/// Moves `words[start..start + len]` so that it is inserted before
/// position `target` of the original sequence.
fn perform_shift<T: Clone>(words: &[T], start: usize, len: usize, target: usize) -> Vec<T> {
    let phrase = &words[start..start + len];
    let mut out = Vec::with_capacity(words.len());
    if target < start {
        out.extend_from_slice(&words[..target]);
        out.extend_from_slice(phrase);
        out.extend_from_slice(&words[target..start]);
        out.extend_from_slice(&words[start + len..]);
    } else if target > start + len {
        out.extend_from_slice(&words[..start]);
        out.extend_from_slice(&words[start + len..target]);
        out.extend_from_slice(phrase);
        out.extend_from_slice(&words[target..]);
    } else {
        let end = (len + target).min(words.len());
        out.extend_from_slice(&words[..start]);
        out.extend_from_slice(&words[start + len..end]);
        out.extend_from_slice(phrase);
        out.extend_from_slice(&words[end..]);
    }
    out
}

struct Candidate<T> {
    gain: isize,
    distance: usize,
    start: usize,
    target: usize,
    words: Vec<T>,
}

impl<T> Candidate<T> {
    fn beats(&self, other: &Candidate<T>) -> bool {
        (self.gain, std::cmp::Reverse(self.distance), std::cmp::Reverse(self.start), std::cmp::Reverse(self.target))
            > (other.gain, std::cmp::Reverse(other.distance), std::cmp::Reverse(other.start), std::cmp::Reverse(other.target))
    }
}

/// Best single shift of `hyp`, if any reduces the edit distance.
fn best_shift<T: PartialEq + Clone>(hyp: &[T], reference: &[T]) -> Option<(usize, Vec<T>)> {
    let (pre, ops) = edit_trace(hyp, reference);
    let al = alignment(&ops, hyp.len(), reference.len());
    let mut best: Option<Candidate<T>> = None;
    let mut examined = 0usize;
    'outer: for start_h in 0..hyp.len() {
        for start_r in 0..reference.len() {
            let mut len = 0;
            while len < MAX_SHIFT_LEN
                && start_h + len < hyp.len()
                && start_r + len < reference.len()
                && hyp[start_h + len] == reference[start_r + len]
            {
                len += 1;
                if !al.hyp_err[start_h..start_h + len].iter().any(|&e| e) {
                    continue;
                }
                if !al.ref_err[start_r..start_r + len].iter().any(|&e| e) {
                    continue;
                }
                let anchor = al.ref_to_hyp[start_r];
                if anchor >= start_h as isize && anchor < (start_h + len) as isize {
                    continue;
                }
                let mut prev_target: Option<usize> = None;
                for offset in -1isize..len as isize {
                    let r = start_r as isize + offset;
                    let target = if r == -1 {
                        0
                    } else if (r as usize) < reference.len() {
                        (al.ref_to_hyp[r as usize] + 1) as usize
                    } else {
                        break;
                    };
                    if prev_target == Some(target) {
                        continue;
                    }
                    prev_target = Some(target);
                    let words = perform_shift(hyp, start_h, len, target);
                    let gain = pre as isize - edit_distance(&words, reference) as isize;
                    let cand = Candidate {
                        gain,
                        distance: target.abs_diff(start_h),
                        start: start_h,
                        target,
                        words,
                    };
                    examined += 1;
                    if best.as_ref().is_none_or(|b| cand.beats(b)) {
                        best = Some(cand);
                    }
                }
                if examined >= MAX_SHIFT_CANDIDATES {
                    break 'outer;
                }
            }
        }
    }
    best.filter(|b| b.gain > 0).map(|b| (b.gain as usize, b.words))
}

/// Greedy TER edit counts for one segment.
pub fn ter_edits<T: PartialEq + Clone>(hyp: &[T], reference: &[T]) -> TerEdits {
    if reference.is_empty() {
        return TerEdits {
            shifts: 0,
            edit_distance: hyp.len(),
            ref_len: 0,
        };
    }
    let mut words = hyp.to_vec();
    let mut shifts = 0;
    while let Some((_, shifted)) = best_shift(&words, reference) {
        words = shifted;
        shifts += 1;
    }
    TerEdits {
        shifts,
        edit_distance: edit_distance(&words, reference),
        ref_len: reference.len(),
    }
}

/// Per-segment edit counts, computed in parallel, in input order.
pub fn ter_segments(pairs: &[TokenizedPair]) -> Vec<TerEdits> {
    pairs
        .par_iter()
        .map(|p| ter_edits(&p.hypothesis, &p.reference))
        .collect()
}

/// Corpus TER: total edits over total reference words.
pub fn ter(pairs: &[TokenizedPair]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(i) = pairs.iter().position(|p| p.reference.is_empty()) {
        return Err(MetricsError::EmptyReference(i));
    }
    Ok(corpus_rate(&ter_segments(pairs)))
}

pub fn corpus_rate(edits: &[TerEdits]) -> f64 {
    let total: usize = edits.iter().map(TerEdits::total).sum();
    let ref_len: usize = edits.iter().map(|e| e.ref_len).sum();
    rate(total, ref_len)
}
