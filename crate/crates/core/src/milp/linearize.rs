//! Linear reformulations of the two non-linear pieces of the restoration
//! model: products of binaries and the apparent-power disc.

use std::f64::consts::PI;

use super::{ConstrId, ConstraintSense, MilpModel, ModelError, VarId, VarKind};

pub const DEFAULT_POLYGON_SEGMENTS: u32 = 12;

/// Adds `z = a·b` for binary `a`, `b` via the McCormick envelope
/// `z <= a, z <= b, z >= a + b - 1, 0 <= z <= 1`. `z` is continuous; the
/// envelope is exact at every integer point of `(a, b)`.
pub fn mccormick_binary_product(
    model: &mut MilpModel,
    a: VarId,
    b: VarId,
) -> Result<VarId, ModelError> {
    for v in [a, b] {
        if v.index() >= model.num_vars() {
            return Err(ModelError::UnknownVariable {
                context: "binary product".into(),
                index: v.index(),
                count: model.num_vars(),
            });
        }
        if model.var(v).kind != VarKind::Binary {
            return Err(ModelError::NotBinary(model.var(v).name.clone()));
        }
    }
    let name = format!("prod_{}_{}", model.var(a).name, model.var(b).name);
    let z = model.add_continuous(name.clone(), 0.0, 1.0)?;
    model.add_constraint(format!("{name}_le_a"), [(z, 1.0), (a, -1.0)], ConstraintSense::Le, 0.0)?;
    model.add_constraint(format!("{name}_le_b"), [(z, 1.0), (b, -1.0)], ConstraintSense::Le, 0.0)?;
    model.add_constraint(
        format!("{name}_ge"),
        [(z, 1.0), (a, -1.0), (b, -1.0)],
        ConstraintSense::Ge,
        -1.0,
    )?;
    Ok(z)
}

/// Outer polygon of the disc `P² + Q² <= gate·S²`: one tangent half-plane
/// `cos θ·P + sin θ·Q <= S·gate` at each `θ = 2πk/segments`. With an even
/// segment count the four axis-aligned cuts are included, so `gate = 0`
/// forces `P = Q = 0`. Every point of the polygon lies within radius
/// `S / cos(π/segments)`.
pub fn polygonal_capacity_cuts(
    model: &mut MilpModel,
    p: VarId,
    q: VarId,
    s_cap: f64,
    gate: VarId,
    segments: u32,
) -> Result<Vec<ConstrId>, ModelError> {
    if segments < 4 || !segments.is_multiple_of(2) {
        return Err(ModelError::Segments(segments));
    }
    if !(s_cap.is_finite() && s_cap > 0.0) {
        return Err(ModelError::Capacity(s_cap));
    }
    let base = format!("cap_{}_{}", model.var(p).name, model.var(q).name);
    (0..segments)
        .map(|k| {
            let theta = 2.0 * PI * f64::from(k) / f64::from(segments);
            let (sin, cos) = (clean(theta.sin()), clean(theta.cos()));
            model.add_constraint(
                format!("{base}_{k}"),
                [(p, cos), (q, sin), (gate, -s_cap)],
                ConstraintSense::Le,
                0.0,
            )
        })
        .collect()
}

/// Snaps round-off (e.g. cos(π/2) ≈ 6e-17) to exact zeros and ±1.
fn clean(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        0.0
    } else if (x.abs() - 1.0).abs() < 1e-12 {
        x.signum()
    } else {
        x
    }
}
