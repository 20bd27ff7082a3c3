//! Upper/lower LED group separation.
//!
//! The count-weighted mean row of the ROI falls between the two LED groups,
//! so it serves as a threshold-free boundary. Both output frames keep the
//! full ROI shape and origin with the other side zeroed, which lets the
//! correlation stage read the inter-group displacement directly.

use crate::accumulation::CountFrame;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum SeparationError {
    #[error("frame has no events to weight")]
    Degenerate,
    #[error("all event mass lies on one side of the boundary row {boundary_y:.3}")]
    OneSided { boundary_y: f64 },
    #[error("boundary row {boundary_y:.3} cuts through event mass instead of a gap")]
    BoundaryOnMass { boundary_y: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitFrames {
    pub upper: CountFrame,
    pub lower: CountFrame,
    /// Full-sensor row coordinate of the boundary.
    pub boundary_y: f64,
}

/// Count-weighted mean row in full-sensor coordinates.
pub fn weighted_y(frame: &CountFrame) -> Result<f64, SeparationError> {
    let y0 = frame.origin.1 as f64;
    let (mut moment, mut mass) = (0.0f64, 0u64);
    for (r, row) in frame.rows().enumerate() {
        let row_mass: u64 = row.iter().map(|&c| c as u64).sum();
        moment += (y0 + r as f64) * row_mass as f64;
        mass += row_mass;
    }
    if mass == 0 {
        return Err(SeparationError::Degenerate);
    }
    Ok(moment / mass as f64)
}

/// First local row that belongs to the lower group.
fn first_lower_row(frame: &CountFrame, boundary_y: f64) -> usize {
    let local = (boundary_y - frame.origin.1 as f64).ceil();
    (local.max(0.0) as usize).min(frame.height())
}

pub fn split(frame: &CountFrame) -> Result<SplitFrames, SeparationError> {
    let boundary_y = weighted_y(frame)?;
    let cut = first_lower_row(frame, boundary_y);
    let w = frame.width();

    let mut upper = frame.zeroed_like();
    let mut lower = frame.zeroed_like();
    upper.counts_mut()[..cut * w].copy_from_slice(&frame.counts()[..cut * w]);
    lower.counts_mut()[cut * w..].copy_from_slice(&frame.counts()[cut * w..]);

    if upper.is_empty() || lower.is_empty() {
        return Err(SeparationError::OneSided { boundary_y });
    }
    Ok(SplitFrames {
        upper,
        lower,
        boundary_y,
    })
}

/// True when the rows on either side of `boundary_y` carry no counts.
pub fn boundary_in_gap(frame: &CountFrame, boundary_y: f64) -> bool {
    let local = boundary_y - frame.origin.1 as f64;
    let rows = [local.floor(), local.ceil()];
    rows.iter()
        .filter(|r| **r >= 0.0 && (**r as usize) < frame.height())
        .all(|&r| frame.row(r as usize).iter().all(|&c| c == 0))
}

/// [`split`] plus a check that the boundary sits in the empty band between
/// two groups. A single visible group has its weighted mean on its own
/// mass, which this rejects.
pub fn split_groups(frame: &CountFrame) -> Result<SplitFrames, SeparationError> {
    let s = split(frame)?;
    if !boundary_in_gap(frame, s.boundary_y) {
        return Err(SeparationError::BoundaryOnMass {
            boundary_y: s.boundary_y,
        });
    }
    Ok(s)
}
