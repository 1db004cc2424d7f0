//! Delta debugging over pass sequences.

use thiserror::Error;

use crate::passes::PassName;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("failing pipeline no longer fails: {0:?}")]
pub struct NotReproducible(pub Vec<PassName>);

/// ddmin over `passes` followed by a single-removal sweep, so the result is
/// 1-minimal: `fails(result)` holds and removing any one pass makes it false.
/// Relative order is preserved.
pub fn ddmin<F>(passes: &[PassName], mut fails: F) -> Result<Vec<PassName>, NotReproducible>
where
    F: FnMut(&[PassName]) -> bool,
{
    if !fails(passes) {
        return Err(NotReproducible(passes.to_vec()));
    }
    let mut current = passes.to_vec();
    let mut n = 2usize;
    while current.len() >= 2 {
        let chunks = split(&current, n);
        let mut reduced = false;
        for chunk in &chunks {
            if fails(chunk) {
                current = chunk.clone();
                n = 2;
                reduced = true;
                break;
            }
        }
        if !reduced && n > 2 {
            for i in 0..chunks.len() {
                let complement: Vec<PassName> = chunks
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .flat_map(|(_, c)| c.iter().copied())
                    .collect();
                if fails(&complement) {
                    current = complement;
                    n = (n - 1).max(2);
                    reduced = true;
                    break;
                }
            }
        }
        if !reduced {
            if n >= current.len() {
                break;
            }
            n = (2 * n).min(current.len());
        }
    }
    // ddmin is 1-minimal in theory; the sweep makes it so for any predicate.
    let mut i = 0;
    while i < current.len() && current.len() > 1 {
        let mut without = current.clone();
        without.remove(i);
        if fails(&without) {
            current = without;
            i = 0;
        } else {
            i += 1;
        }
    }
    Ok(current)
}

fn split(items: &[PassName], n: usize) -> Vec<Vec<PassName>> {
    let n = n.min(items.len());
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    for k in 0..n {
        let end = start + (items.len() - start) / (n - k);
        out.push(items[start..end].to_vec());
        start = end;
    }
    out
}

/// True when no single removal from `set` still fails.
pub fn is_one_minimal<F>(set: &[PassName], mut fails: F) -> bool
where
    F: FnMut(&[PassName]) -> bool,
{
    fails(set)
        && (0..set.len()).all(|i| {
            let mut without = set.to_vec();
            without.remove(i);
            without.is_empty() || !fails(&without)
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::passes::DEFAULT_PIPELINE;

    fn contains_in_order(hay: &[PassName], needle: &[PassName]) -> bool {
        let mut it = hay.iter();
        needle.iter().all(|n| it.any(|h| h == n))
    }

    #[test]
    fn singleton_culprit() {
        let p = PassName::ElementwiseFusion;
        let got = ddmin(&DEFAULT_PIPELINE, |s| s.contains(&p)).unwrap();
        assert_eq!(got, vec![p]);
    }

    #[test]
    fn ordered_pair_culprit() {
        let need = [PassName::ConstantFolding, PassName::DeadCodeElimination];
        let got = ddmin(&DEFAULT_PIPELINE, |s| contains_in_order(s, &need)).unwrap();
        assert_eq!(got, need.to_vec());
        assert!(is_one_minimal(&got, |s| contains_in_order(s, &need)));
    }

    #[test]
    fn clean_input_is_rejected() {
        assert!(ddmin(&DEFAULT_PIPELINE, |_| false).is_err());
    }

    #[test]
    fn split_is_a_partition() {
        for n in 1..=7 {
            let parts = split(&DEFAULT_PIPELINE, n);
            let flat: Vec<PassName> = parts.concat();
            assert_eq!(flat, DEFAULT_PIPELINE.to_vec());
            assert!(parts.iter().all(|p| !p.is_empty()));
        }
    }
}
