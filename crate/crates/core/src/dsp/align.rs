use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::tensor_io::{FeatureMatrix, FrameSpec};

const MAX_DENOMINATOR: u64 = 4;

/// Brings two frame streams to a common stride.
///
/// The finer stream is reduced by averaging consecutive groups of
/// `r = coarse_stride / fine_stride` frames (a trailing partial group is
/// dropped), then both streams are truncated to the shorter length. Both
/// outputs carry the coarser stream's timing (the first argument's on a tie).
/// A remaining receptive-field or offset mismatch is logged, not corrected.
pub fn align_streams(a: &FeatureMatrix, b: &FeatureMatrix) -> Result<(FeatureMatrix, FeatureMatrix)> {
    let spec_a = *a
        .frame_spec()
        .ok_or_else(|| Error::Precondition("first stream has no frame timing".into()))?;
    let spec_b = *b
        .frame_spec()
        .ok_or_else(|| Error::Precondition("second stream has no frame timing".into()))?;

    let a_is_fine = spec_a.stride_ms < spec_b.stride_ms;
    let (fine_spec, coarse_spec) = if a_is_fine {
        (spec_a, spec_b)
    } else {
        (spec_b, spec_a)
    };
    let r = integer_ratio(coarse_spec.stride_ms, fine_spec.stride_ms)?;

    let (mut a_out, mut b_out) = if r == 1 {
        (a.clone(), b.clone())
    } else if a_is_fine {
        (average_groups(a, r)?, b.clone())
    } else {
        (a.clone(), average_groups(b, r)?)
    };

    let derived = FrameSpec::new(
        coarse_spec.stride_ms,
        fine_spec.receptive_field_ms + (r - 1) as f64 * fine_spec.stride_ms,
        fine_spec.offset_ms + (r - 1) as f64 * fine_spec.stride_ms / 2.0,
    );
    if (derived.receptive_field_ms - coarse_spec.receptive_field_ms).abs() > 1e-9
        || (derived.offset_ms - coarse_spec.offset_ms).abs() > 1e-9
    {
        log::info!(
            "stride-matched streams differ in receptive field/offset: {:.3}/{:.3} ms vs {:.3}/{:.3} ms",
            derived.receptive_field_ms,
            derived.offset_ms,
            coarse_spec.receptive_field_ms,
            coarse_spec.offset_ms
        );
    }

    let len = a_out.rows().min(b_out.rows());
    a_out = truncate(a_out, len)?;
    b_out = truncate(b_out, len)?;
    a_out.set_frame_spec(Some(coarse_spec));
    b_out.set_frame_spec(Some(coarse_spec));
    Ok((a_out, b_out))
}

/// Rationalizes `coarse / fine` with a denominator of at most 4 and requires
/// the reduced fraction to be an integer.
fn integer_ratio(coarse: f64, fine: f64) -> Result<usize> {
    if !(fine > 0.0 && coarse > 0.0) {
        return Err(Error::Precondition(format!(
            "strides must be positive, got {coarse} and {fine}"
        )));
    }
    let ratio = coarse / fine;
    for q in 1..=MAX_DENOMINATOR {
        let p = (ratio * q as f64).round() as u64;
        if p == 0 || ((p as f64 / q as f64) - ratio).abs() > 1e-6 * ratio {
            continue;
        }
        let g = gcd(p, q);
        let (p, q) = (p / g, q / g);
        if q == 1 {
            return Ok(p as usize);
        }
        return Err(Error::Unsupported(format!(
            "stride ratio {coarse}/{fine} reduces to {p}/{q}, not an integer"
        )));
    }
    Err(Error::Unsupported(format!(
        "stride ratio {coarse}/{fine} has no rational form with denominator <= {MAX_DENOMINATOR}"
    )))
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn average_groups(m: &FeatureMatrix, r: usize) -> Result<FeatureMatrix> {
    let groups = m.rows() / r;
    if groups == 0 {
        return Err(Error::Input(format!(
            "stream of {} frames is shorter than one group of {r}",
            m.rows()
        )));
    }
    let mut out = Array2::zeros((groups, m.dim()));
    for (g, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let block = m.data().slice(ndarray::s![g * r..(g + 1) * r, ..]);
        row.assign(&block.mean_axis(Axis(0)).expect("non-empty group"));
    }
    let mut reduced = FeatureMatrix::new(out)?;
    if let Some(id) = m.layer_id() {
        reduced = reduced.with_layer_id(id);
    }
    Ok(reduced)
}

fn truncate(m: FeatureMatrix, len: usize) -> Result<FeatureMatrix> {
    if m.rows() == len {
        return Ok(m);
    }
    let spec = m.frame_spec().copied();
    let layer = m.layer_id();
    let mut data = m.into_data();
    data.truncate_rows(len);
    let mut t = FeatureMatrix::new(data)?;
    t.set_frame_spec(spec);
    if let Some(id) = layer {
        t = t.with_layer_id(id);
    }
    Ok(t)
}

trait TruncateRows {
    fn truncate_rows(&mut self, len: usize);
}

impl TruncateRows for Array2<f64> {
    fn truncate_rows(&mut self, len: usize) {
        self.slice_collapse(ndarray::s![..len, ..]);
    }
}
