//! Ordered phrase matching with slop.
//!
//! A phrase of `n` terms matches when there are positions `p1 < p2 < … < pn`
//! with `pi` taken from the i-th list and at most `slop` tokens in between
//! them in total: `(pn - p1) - (n - 1) <= slop`. Terms are never reordered.

/// True when the position lists admit an ordered match within `slop`.
pub fn phrase_positions_match(lists: &[&[u32]], slop: u32) -> bool {
    sweep(lists, slop, true) > 0
}

/// Number of distinct first-term positions from which a match exists.
pub fn phrase_start_count(lists: &[&[u32]], slop: u32) -> usize {
    sweep(lists, slop, false)
}

/// For a fixed start `p1`, choosing each following position as the smallest
/// one greater than its predecessor minimizes `pn`. As `p1` grows those
/// choices never move backwards, so one forward pointer per list suffices and
/// the whole sweep is linear in the total number of positions.
fn sweep(lists: &[&[u32]], slop: u32, first_only: bool) -> usize {
    let Some(first) = lists.first() else {
        return 0;
    };
    if lists.iter().any(|l| l.is_empty()) {
        return 0;
    }
    if lists.len() == 1 {
        return if first_only { 1 } else { first.len() };
    }
    let gaps_allowed = u64::from(slop);
    let span_floor = (lists.len() - 1) as u64;
    let mut cursors = vec![0usize; lists.len()];
    let mut starts = 0;
    'starts: for &start in first.iter() {
        let mut prev = start;
        for (list, cursor) in lists.iter().zip(cursors.iter_mut()).skip(1) {
            while *cursor < list.len() && list[*cursor] <= prev {
                *cursor += 1;
            }
            let Some(&next) = list.get(*cursor) else {
                // Later starts cannot find a successor either.
                break 'starts;
            };
            prev = next;
        }
        if u64::from(prev - start) - span_floor <= gaps_allowed {
            starts += 1;
            if first_only {
                break;
            }
        }
    }
    starts
}
