//! Fill-reducing orderings for matrices on tensor grids.

/// Nested dissection of an `n1 × n2` grid whose couplings reach `width` lines
/// in either direction. Blocks are split across their longer side by
/// separators `width` lines thick until both sides are short; separators are
/// eliminated after the two halves. Returns grid indices `i * n2 + j` in
/// elimination order.
pub fn grid_nested_dissection(n1: usize, n2: usize, width: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n1 * n2);
    let leaf = (2 * width + 1).max(8);
    dissect([0, n1], [0, n2], n2, width.max(1), leaf, &mut out);
    out
}

fn dissect(ri: [usize; 2], rj: [usize; 2], n2: usize, w: usize, leaf: usize, out: &mut Vec<usize>) {
    let (li, lj) = (ri[1] - ri[0], rj[1] - rj[0]);
    let block = |ri: [usize; 2], rj: [usize; 2], out: &mut Vec<usize>| {
        for i in ri[0]..ri[1] {
            out.extend((rj[0]..rj[1]).map(|j| i * n2 + j));
        }
    };
    if li.max(lj) <= leaf {
        block(ri, rj, out);
    } else if li >= lj {
        let m = ri[0] + (li - w) / 2;
        dissect([ri[0], m], rj, n2, w, leaf, out);
        dissect([m + w, ri[1]], rj, n2, w, leaf, out);
        block([m, m + w], rj, out);
    } else {
        let m = rj[0] + (lj - w) / 2;
        dissect(ri, [rj[0], m], n2, w, leaf, out);
        dissect(ri, [m + w, rj[1]], n2, w, leaf, out);
        block(ri, [m, m + w], out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn is_a_permutation() {
        for (n1, n2, w) in [(1, 1, 1), (9, 40, 2), (33, 17, 5), (64, 64, 3)] {
            let mut o = grid_nested_dissection(n1, n2, w);
            o.sort_unstable();
            assert_eq!(o, (0..n1 * n2).collect::<Vec<_>>());
        }
    }

    #[test]
    fn separator_comes_last_and_splits() {
        let (n, w) = (40, 2);
        let o = grid_nested_dissection(n, n, w);
        // the top separator is the last w·n entries: w full rows
        let sep: Vec<usize> = o[o.len() - w * n..].iter().map(|&k| k / n).collect();
        let rows: std::collections::BTreeSet<usize> = sep.into_iter().collect();
        assert_eq!(rows.len(), w);
        let (lo, hi) = (*rows.first().unwrap(), *rows.last().unwrap());
        // the first half contains no row at or beyond the separator
        let half = &o[..(lo * n)];
        assert!(half.iter().all(|&k| k / n < lo));
        assert!(o[lo * n..o.len() - w * n].iter().all(|&k| k / n > hi));
    }
}
