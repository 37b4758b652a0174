//! Focus rectangle around tracked points.

use serde::{Deserialize, Serialize};
use streampca::LayoutSnapshot;

use crate::protocol::TrackingSelection;

/// Fraction of the bounding box's extent added on each side.
pub const MARGIN: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocusRect {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl FocusRect {
    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.min.iter().zip(&self.max))
            .all(|(v, (lo, hi))| (lo..=hi).contains(&v))
    }
}

/// Bounding box of `points` padded by [`MARGIN`] of its extent per axis.
///
/// An axis with no extent is padded as if its extent were the box's largest
/// one, or `fallback` when all points coincide.
pub fn focus_rect<'a>(points: impl IntoIterator<Item = &'a [f64]>, fallback: f64) -> Option<FocusRect> {
    let mut iter = points.into_iter();
    let first = iter.next()?;
    let mut min = first.to_vec();
    let mut max = first.to_vec();
    for p in iter {
        for (j, v) in p.iter().enumerate() {
            min[j] = min[j].min(*v);
            max[j] = max[j].max(*v);
        }
    }
    let widest = min.iter().zip(&max).map(|(lo, hi)| hi - lo).fold(0.0, f64::max);
    let floor = if widest > 0.0 { widest } else { fallback };
    for (lo, hi) in min.iter_mut().zip(max.iter_mut()) {
        let extent = *hi - *lo;
        let pad = MARGIN * if extent > 0.0 { extent } else { floor };
        *lo -= pad;
        *hi += pad;
    }
    Some(FocusRect { min, max })
}

/// Largest axis extent of everything displayed in `snapshot`, or 1 when it
/// has no extent.
pub fn layout_extent(snapshot: &LayoutSnapshot) -> f64 {
    let mut positions = snapshot.positions().map(|(_, p)| p);
    let Some(first) = positions.next() else {
        return 1.0;
    };
    let mut min = first.to_vec();
    let mut max = first.to_vec();
    for p in positions {
        for (j, v) in p.iter().enumerate() {
            min[j] = min[j].min(*v);
            max[j] = max[j].max(*v);
        }
    }
    let widest = min.iter().zip(&max).map(|(lo, hi)| hi - lo).fold(0.0, f64::max);
    if widest > 0.0 {
        widest
    } else {
        1.0
    }
}

/// Focus for one session: selected points still displayed and/or the
/// points that are new in this frame (in-flight partial points and points
/// that just joined the layout).
pub fn session_focus(snapshot: &LayoutSnapshot, selection: &TrackingSelection) -> Option<FocusRect> {
    let mut tracked: Vec<&[f64]> = Vec::new();
    if selection.mode.tracks_selection() {
        tracked.extend(selection.ids.iter().filter_map(|id| snapshot.position_of(id)));
    }
    if selection.mode.tracks_new() {
        tracked.extend(snapshot.partials.values().map(|p| p.position.as_slice()));
        tracked.extend(
            snapshot
                .added
                .iter()
                .filter(|id| !selection.ids.contains(*id))
                .filter_map(|id| snapshot.layout.position_of(id)),
        );
    }
    if tracked.is_empty() {
        return None;
    }
    focus_rect(tracked, layout_extent(snapshot))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_points() {
        let pts: [&[f64]; 3] = [&[0.0, 0.0], &[2.0, 1.0], &[1.0, -1.0]];
        let r = focus_rect(pts, 1.0).unwrap();
        assert_eq!(r.min, vec![-0.4, -1.4]);
        assert_eq!(r.max, vec![2.4, 1.4]);
        assert!(pts.iter().all(|p| r.contains(p)));
    }

    #[test]
    fn degenerate_axis_uses_widest() {
        let pts: [&[f64]; 2] = [&[0.0, 5.0], &[10.0, 5.0]];
        let r = focus_rect(pts, 1.0).unwrap();
        assert_eq!(r.min, vec![-2.0, 3.0]);
        assert_eq!(r.max, vec![12.0, 7.0]);
    }

    #[test]
    fn single_point_uses_fallback() {
        let r = focus_rect([&[1.0, 1.0][..]], 5.0).unwrap();
        assert_eq!(r.min, vec![0.0, 0.0]);
        assert_eq!(r.max, vec![2.0, 2.0]);
    }

    #[test]
    fn empty_has_no_focus() {
        assert!(focus_rect(std::iter::empty::<&[f64]>(), 1.0).is_none());
    }
}
