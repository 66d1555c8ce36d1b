//! Constraint descriptors and the table of numeric conventions that map task
//! language ("left", "corner", "close to the robot") onto geometry.

use serde::{Deserialize, Serialize};

/// Meaning of the spatial words in task sentences. Every threshold the
/// validator and the reference goal generators use lives here.
pub mod frame {
    /// Position tolerance for exact targets, meters.
    pub const POS_TOL: f64 = 0.02;
    /// Bound on |cos| of an angle that counts as right.
    pub const RIGHT_ANGLE_COS: f64 = 0.05;
    /// Two triangle sides count as equal within this, meters.
    pub const SIDE_TOL: f64 = 0.01;
    /// A flipped cube's z axis must be within this of world -z, radians.
    pub const FLIP_TOL: f64 = 0.2;
    /// Corner region: within this of a table corner along both x and y.
    pub const CORNER_BAND: f64 = 0.15;
    /// "Left side" / "right side": within this of the table's x extremes.
    pub const SIDE_BAND: f64 = 0.25;
    /// "Right edge": within this of the table's right border.
    pub const EDGE_BAND: f64 = 0.10;
    /// "Far side" / "far right": within this of the far border.
    pub const FAR_BAND: f64 = 0.25;
    /// "Close to the robot arm": horizontal distance to the base.
    pub const CLOSE: f64 = 0.30;
    /// "Very close to the robot arm".
    pub const VERY_CLOSE: f64 = 0.20;
    /// "Away from the robot arm".
    pub const AWAY: f64 = 0.55;
    /// Smallest side of a multi-object figure; keeps cubes from overlapping.
    pub const MIN_SIDE: f64 = 0.05;
    /// Interior angles with |cos| above this make a triangle degenerate.
    pub const DEGENERATE_COS: f64 = 0.98;
    /// Pairwise spacing tolerance for d29-style tasks.
    pub const SPACING_TOL: f64 = 0.02;
}

/// An allowed interval. In data files a bare number `v` means `v ± POS_TOL`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Exact(f64),
    Range([f64; 2]),
}

impl Bound {
    pub fn lo(&self) -> f64 {
        match *self {
            Bound::Exact(v) => v - frame::POS_TOL,
            Bound::Range([lo, _]) => lo,
        }
    }

    pub fn hi(&self) -> f64 {
        match *self {
            Bound::Exact(v) => v + frame::POS_TOL,
            Bound::Range([_, hi]) => hi,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo() - 1e-12 && v <= self.hi() + 1e-12
    }

    /// Interval a reference generator samples from: the exact value itself,
    /// or the range shrunk by a small margin.
    pub fn sample_range(&self) -> (f64, f64) {
        match *self {
            Bound::Exact(v) => (v, v),
            Bound::Range([lo, hi]) => {
                let m = ((hi - lo) * 0.05).min(0.005);
                (lo + m, hi - m)
            }
        }
    }

    pub fn describe(&self) -> String {
        format!("[{:.3}, {:.3}]", self.lo(), self.hi())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diagonal {
    /// From (0, 0) to (1, 1) in table coordinates: bottom left to top right.
    Main,
    /// From (1, 0) to (0, 1).
    Anti,
    Either,
}

/// Machine-checkable meaning of one task sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintDescriptor {
    /// Target xy inside the given ranges; optional absolute height above the table.
    Region {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        x: Option<Bound>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        y: Option<Bound>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        z_above: Option<Bound>,
    },
    /// Target z exactly this far above the table top, xy free.
    Height { z_above: Bound },
    /// Offset from the object's initial pose, per axis, plus an optional absolute height.
    RelativeOffset {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dx: Option<Bound>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dy: Option<Bound>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dz: Option<Bound>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        z_above: Option<Bound>,
    },
    /// The object's local z axis ends up pointing down.
    OrientationFlip { tol: f64 },
    /// Inside the corner band of any table corner.
    CornerAny { band: f64 },
    /// Within `tol` of a table diagonal.
    Diagonal { diagonal: Diagonal, tol: f64 },
    /// Center at least `margin` outside the table footprint, still reachable.
    OffTable { margin: f64 },
    /// Horizontal distance to the robot base at most `max`.
    ProximityToBase { max: f64 },
    /// Horizontal distance to the robot base at least `min`.
    DistanceFromBase { min: f64 },
    /// Three targets in order: left band, right band, table center.
    MultiLeftCenterRight { band: f64, center_tol: f64 },
    /// All pairwise distances within `tol` of `distance`.
    MultiPairwiseDistance { distance: f64, tol: f64 },
    /// Some vertex has a right angle.
    MultiRightTriangle { cos_tol: f64, min_side: f64 },
    /// Two sides equal within `tol`.
    MultiIsosceles { tol: f64, min_side: f64 },
    /// The three targets and the table center are the corners of a square.
    MultiSquareCenterCorner { tol: f64, min_side: f64 },
}

impl ConstraintDescriptor {
    pub fn kind(&self) -> &'static str {
        match self {
            ConstraintDescriptor::Region { .. } => "region",
            ConstraintDescriptor::Height { .. } => "height",
            ConstraintDescriptor::RelativeOffset { .. } => "relative_offset",
            ConstraintDescriptor::OrientationFlip { .. } => "orientation_flip",
            ConstraintDescriptor::CornerAny { .. } => "corner_any",
            ConstraintDescriptor::Diagonal { .. } => "diagonal",
            ConstraintDescriptor::OffTable { .. } => "off_table",
            ConstraintDescriptor::ProximityToBase { .. } => "proximity_to_base",
            ConstraintDescriptor::DistanceFromBase { .. } => "distance_from_base",
            ConstraintDescriptor::MultiLeftCenterRight { .. } => "multi_left_center_right",
            ConstraintDescriptor::MultiPairwiseDistance { .. } => "multi_pairwise_distance",
            ConstraintDescriptor::MultiRightTriangle { .. } => "multi_right_triangle",
            ConstraintDescriptor::MultiIsosceles { .. } => "multi_isosceles",
            ConstraintDescriptor::MultiSquareCenterCorner { .. } => "multi_square_center_corner",
        }
    }

    /// Number of targets the descriptor talks about.
    pub fn n_objects(&self) -> usize {
        if self.kind().starts_with("multi_") {
            3
        } else {
            1
        }
    }

    /// True when the descriptor pins the target's height, absolutely or relative to the start.
    pub fn constrains_height(&self) -> bool {
        match self {
            ConstraintDescriptor::Region { z_above, .. } => z_above.is_some(),
            ConstraintDescriptor::Height { .. } => true,
            ConstraintDescriptor::RelativeOffset { dz, z_above, .. } => dz.is_some() || z_above.is_some(),
            _ => false,
        }
    }

    /// Checks that the parameters are complete and tolerances positive.
    pub fn check(&self) -> Result<(), String> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(format!("{} must be positive, got {v}", name))
            }
        };
        let bound = |name: &str, b: &Option<Bound>| match b {
            Some(b) if !(b.lo() <= b.hi()) => Err(format!("{name} range is empty")),
            _ => Ok(()),
        };
        match self {
            ConstraintDescriptor::Region { x, y, z_above } => {
                bound("x", x)?;
                bound("y", y)?;
                bound("z_above", z_above)?;
                if x.is_none() && y.is_none() && z_above.is_none() {
                    return Err("region needs at least one of x, y, z_above".into());
                }
                Ok(())
            }
            ConstraintDescriptor::Height { z_above } => bound("z_above", &Some(*z_above)),
            ConstraintDescriptor::RelativeOffset { dx, dy, dz, z_above } => {
                bound("dx", dx)?;
                bound("dy", dy)?;
                bound("dz", dz)?;
                bound("z_above", z_above)?;
                if dx.is_none() && dy.is_none() && dz.is_none() {
                    return Err("relative_offset needs at least one of dx, dy, dz".into());
                }
                Ok(())
            }
            ConstraintDescriptor::OrientationFlip { tol } => positive("tol", *tol),
            ConstraintDescriptor::CornerAny { band } => positive("band", *band),
            ConstraintDescriptor::Diagonal { tol, .. } => positive("tol", *tol),
            ConstraintDescriptor::OffTable { margin } => positive("margin", *margin),
            ConstraintDescriptor::ProximityToBase { max } => positive("max", *max),
            ConstraintDescriptor::DistanceFromBase { min } => positive("min", *min),
            ConstraintDescriptor::MultiLeftCenterRight { band, center_tol } => {
                positive("band", *band)?;
                positive("center_tol", *center_tol)
            }
            ConstraintDescriptor::MultiPairwiseDistance { distance, tol } => {
                positive("distance", *distance)?;
                positive("tol", *tol)
            }
            ConstraintDescriptor::MultiRightTriangle { cos_tol, min_side } => {
                positive("cos_tol", *cos_tol)?;
                positive("min_side", *min_side)
            }
            ConstraintDescriptor::MultiIsosceles { tol, min_side }
            | ConstraintDescriptor::MultiSquareCenterCorner { tol, min_side } => {
                positive("tol", *tol)?;
                positive("min_side", *min_side)
            }
        }
    }
}
