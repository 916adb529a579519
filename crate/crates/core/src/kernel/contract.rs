use std::collections::BTreeMap;

use super::{BlockTable, Kernel, RawTable, SymTable};
use crate::comb::{difference_sorted, factorial, intersect_sorted, merge_sorted, multiplicity_factor, subsets};
use crate::error::{input, Result};

fn check_pair(f: &Kernel, g: &Kernel, r: usize) -> Result<()> {
    if f.dim() != g.dim() {
        return input(format!("dimension mismatch: {} vs {}", f.dim(), g.dim()));
    }
    if r > f.order().min(g.order()) {
        return input(format!(
            "contraction index {r} exceeds min({}, {})",
            f.order(),
            g.order()
        ));
    }
    Ok(())
}

/// Visits every `(A, B, K)` with `A` a key of `f`, `B` a key of `g`, `K` an
/// `r`-subset of `A ∩ B` and `|A ∩ B| >= min_overlap`, passing
/// `(A \ K, B \ K, f(A) g(B))`.
fn for_each_triple<F>(f: &Kernel, g: &Kernel, r: usize, min_overlap: usize, mut visit: F)
where
    F: FnMut(&[usize], &[usize], f64),
{
    let need = r.max(min_overlap);
    let g_entries: Vec<(&[usize], f64)> = g.iter().collect();
    let mut handle = |a: &[usize], fa: f64, b: &[usize], gb: f64| {
        let common = intersect_sorted(a, b);
        if common.len() < need {
            return;
        }
        for k in subsets(&common, r) {
            let i = difference_sorted(a, &k);
            let j = difference_sorted(b, &k);
            visit(&i, &j, fa * gb);
        }
    };
    if need == 0 {
        for (a, fa) in f.iter() {
            for &(b, gb) in &g_entries {
                handle(a, fa, b, gb);
            }
        }
        return;
    }
    let mut by_coord: Vec<Vec<usize>> = vec![Vec::new(); g.dim()];
    for (id, (b, _)) in g_entries.iter().enumerate() {
        for &c in b.iter() {
            by_coord[c].push(id);
        }
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for (a, fa) in f.iter() {
        counts.clear();
        for &c in a {
            for &id in &by_coord[c] {
                *counts.entry(id).or_insert(0) += 1;
            }
        }
        for (&id, &n) in &counts {
            if n >= need {
                let (b, gb) = g_entries[id];
                handle(a, fa, b, gb);
            }
        }
    }
}

/// The `r`-contraction `f ⊗_r g` in block form:
/// `(i_1..i_{p-r}, j_1..j_{q-r}) ↦ sum_k f(i, k) g(j, k)`.
pub fn contract_blocks(f: &Kernel, g: &Kernel, r: usize) -> Result<BlockTable> {
    check_pair(f, g, r)?;
    let rf = factorial(r);
    let mut map: BTreeMap<(Vec<usize>, Vec<usize>), f64> = BTreeMap::new();
    for_each_triple(f, g, r, 0, |i, j, v| {
        *map.entry((i.to_vec(), j.to_vec())).or_insert(0.0) += rf * v;
    });
    Ok(BlockTable::from_map(f.order() - r, g.order() - r, f.dim(), map))
}

/// The `r`-contraction `f ⊗_r g` as a table on ordered tuples. `r = 0` is the
/// tensor product; the result is generally neither symmetric nor off-diagonal.
pub fn contract(f: &Kernel, g: &Kernel, r: usize) -> Result<RawTable> {
    let blocks = contract_blocks(f, g, r)?;
    if blocks.order() == 0 {
        let s = blocks.iter().map(|(_, _, v)| v).sum();
        return Ok(RawTable::scalar(s, f.dim()));
    }
    Ok(blocks.to_raw())
}

/// `||f ⊗_r g||^2` without materialising ordered tuples.
pub fn contraction_norm_sq(f: &Kernel, g: &Kernel, r: usize) -> Result<f64> {
    Ok(contract_blocks(f, g, r)?.norm_sq())
}

fn sym_contract_impl(f: &Kernel, g: &Kernel, r: usize, min_overlap: usize) -> Result<SymTable> {
    check_pair(f, g, r)?;
    let (p, q) = (f.order(), g.order());
    let m = p + q - 2 * r;
    let mut sums: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    for_each_triple(f, g, r, min_overlap, |i, j, v| {
        *sums.entry(merge_sorted(i, j)).or_insert(0.0) += v;
    });
    // each (A, B, K) yields r!(p-r)!(q-r)! ordered tuples of equal value; the
    // symmetric average over m! permutations then weights a multiset by its
    // multiplicity factor.
    let base = factorial(r) * factorial(p - r) * factorial(q - r) / factorial(m);
    for (k, v) in sums.iter_mut() {
        *v *= base * multiplicity_factor(k);
    }
    Ok(SymTable::from_sorted_map(m, f.dim(), sums))
}

/// Symmetrised contraction `f ⊗̃_r g`, stored once per multiset.
pub fn sym_contract(f: &Kernel, g: &Kernel, r: usize) -> Result<SymTable> {
    sym_contract_impl(f, g, r, 0)
}

/// Diagonal part `(f ⊗̃_r g) 1_{Δ^c}` only, visiting just the key pairs that
/// can produce a repeated index. Cheap when the supports are sparse.
pub fn sym_contract_diagonal(f: &Kernel, g: &Kernel, r: usize) -> Result<SymTable> {
    sym_contract_impl(f, g, r, r + 1)
}

/// `f ⊗̃ g` restricted to pairwise distinct tuples, as a kernel of order `p + q`.
pub fn sym_offdiag_product(f: &Kernel, g: &Kernel) -> Result<Kernel> {
    let t = sym_contract(f, g, 0)?;
    Ok(t.offdiag_kernel().expect("order p + q is positive"))
}

/// `<f ⊗ g, h>` over ordered tuples, for `h` symmetric off-diagonal of order
/// `p + q`. Visits only the keys of `h`, so it stays cheap when `f ⊗ g` is
/// too large to build.
pub fn tensor_inner(f: &Kernel, g: &Kernel, h: &Kernel) -> Result<f64> {
    let (p, q) = (f.order(), g.order());
    if h.order() != p + q {
        return input(format!("order {} does not match {p} + {q}", h.order()));
    }
    if f.dim() != g.dim() || f.dim() != h.dim() {
        return input("dimension mismatch");
    }
    let mut s = 0.0;
    for (key, v) in h.iter() {
        for a in subsets(key, p) {
            let fa = f.value_at(&a)?;
            if fa != 0.0 {
                s += fa * g.value_at(&difference_sorted(key, &a))? * v;
            }
        }
    }
    Ok(factorial(p) * factorial(q) * s)
}
