use hmatpc::hpartition::{packed_width, BlockOwner, HPartition};
use proptest::prelude::*;

fn spans(p: &HPartition) -> Vec<usize> {
    let mut s: Vec<usize> = p.tiles.iter().map(|t| t.span).collect();
    s.sort_unstable_by(|a, b| b.cmp(a));
    s
}

#[test]
fn span_multisets() {
    let p = HPartition::build(1024, 128).unwrap();
    assert_eq!(p.k, 8);
    assert_eq!(p.num_tiles(), 7);
    assert_eq!(spans(&p), vec![4, 2, 2, 1, 1, 1, 1]);

    let p = HPartition::build(256, 128).unwrap();
    assert_eq!(p.num_tiles(), 1);
    assert_eq!((p.tiles[0].span, p.tiles[0].rows.clone(), p.tiles[0].cols.clone()), (1, 0..1, 1..2));

    let p = HPartition::build(2048, 128).unwrap();
    let mut want = vec![8, 4, 4, 2, 2, 2, 2];
    want.extend([1; 8]);
    assert_eq!(spans(&p), want);
}

#[test]
fn tile_count_is_k_minus_one() {
    let mut k = 2;
    while k <= 256 {
        let p = HPartition::build(k * 4, 4).unwrap();
        assert_eq!(p.num_tiles(), k - 1);
        // breadth-first: spans never increase along the list
        assert!(p.tiles.windows(2).all(|w| w[0].span >= w[1].span));
        k *= 2;
    }
}

#[test]
fn packed_widths() {
    for (n, want) in [(1024, 204_800), (2048, 410_624), (8192, 1_645_568), (16384, 3_292_160)] {
        let p = HPartition::build(n, 128).unwrap();
        assert_eq!(packed_width(&p, 32).unwrap(), want, "N = {n}");
    }
    let p = HPartition::build(1024, 128).unwrap();
    assert!(packed_width(&p, 48).is_err());
}

#[test]
fn leaf_memberships() {
    let p = HPartition::build(1024, 128).unwrap();
    let span_of = |ids: &[usize]| ids.iter().map(|&m| p.tiles[m].span).collect::<Vec<_>>();
    assert_eq!(span_of(&p.row_tiles[0]), vec![4, 2, 1]);
    assert!(p.col_tiles[0].is_empty());
    assert_eq!(span_of(&p.col_tiles[7]), vec![4, 2, 1]);
    assert!(p.row_tiles[7].is_empty());
    for k in 0..8 {
        assert_eq!(p.row_tiles[k].len() + p.col_tiles[k].len(), 3);
    }
}

#[test]
fn configuration_errors() {
    assert!(HPartition::build(1000, 128).is_err());
    assert!(HPartition::build(128 * 6, 128).is_err());
    assert!(HPartition::build(128, 128).is_err());
}

#[test]
fn rank_fraction_halves_with_span() {
    let p = HPartition::build(4096, 128).unwrap();
    let layout = p.layout(32).unwrap();
    let frac = |s: usize| layout.coarse as f64 / (s * p.leaf) as f64;
    for s in [1, 2, 4, 8] {
        assert_eq!(frac(2 * s), frac(s) / 2.0);
    }
}

proptest! {
    #[test]
    fn blocks_cover_the_matrix_once(log_k in 1u32..8, log_l in 0u32..4) {
        let (k, l) = (1usize << log_k, 1usize << log_l);
        let p = HPartition::build(k * l, l).unwrap();
        let mut count = vec![0u32; k * k];
        for t in &p.tiles {
            prop_assert_eq!(t.rows.len(), t.span);
            prop_assert_eq!(t.cols.len(), t.span);
            prop_assert_eq!(t.rows.end, t.cols.start);
            prop_assert!(t.span.is_power_of_two());
            for r in t.rows.clone() {
                for c in t.cols.clone() {
                    count[r * k + c] += 1;
                    count[c * k + r] += 1;
                }
            }
        }
        for i in 0..k {
            count[i * k + i] += 1;
        }
        prop_assert!(count.iter().all(|&c| c == 1));
        let area: usize = p.tiles.iter().map(|t| 2 * t.span * t.span * l * l).sum::<usize>() + k * l * l;
        prop_assert_eq!(area, (k * l) * (k * l));
        for r in 0..k {
            for c in 0..k {
                let m = match p.block_owner(r, c) {
                    BlockOwner::Leaf(x) => { prop_assert_eq!((r, c), (x, x)); continue; }
                    BlockOwner::Tile(m) => { prop_assert!(r < c); m }
                    BlockOwner::TileTransposed(m) => { prop_assert!(r > c); m }
                };
                let t = &p.tiles[m];
                prop_assert!(t.rows.contains(&r.min(c)) && t.cols.contains(&r.max(c)));
            }
        }
        prop_assert_eq!(HPartition::build(k * l, l).unwrap(), p);
    }
}
