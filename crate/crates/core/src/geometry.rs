//! Boxes, masks, overlap, directed Hausdorff distance, and the coordinate
//! parametrizations shared by both context models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box, origin top-left, continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        debug_assert!(w > 0.0 && h > 0.0, "degenerate box {}x{}", w, h);
        BoundingBox { x, y, w, h }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.x.is_finite()
            && self.y.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
            && self.w > 0.0
            && self.h > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Geometry(format!("invalid box {:?}", self)))
        }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BoundingBox::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn contains_point(&self, px: f64, py: f64) -> bool {
        px >= self.x && px < self.right() && py >= self.y && py < self.bottom()
    }
}

/// Intersection area over union area; 0 for disjoint boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = (a.right().min(b.right()) - a.x.max(b.x)).max(0.0);
    let iy = (a.bottom().min(b.bottom()) - a.y.max(b.y)).max(0.0);
    let inter = ix * iy;
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// A set of integer pixel coordinates inside an image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMask {
    pub points: Vec<(i64, i64)>,
    /// Image width and height the points live in.
    pub bounds: (u32, u32),
}

impl BinaryMask {
    pub fn new(points: Vec<(i64, i64)>, bounds: (u32, u32)) -> Self {
        BinaryMask { points, bounds }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, p: (i64, i64)) -> bool {
        self.points.contains(&p)
    }
}

/// Directed Hausdorff distance: max over points of `m` of the distance to the
/// nearest point of `m_ref`. Directed on purpose — attachment measures how far
/// the accessory mask strays from the person mask, not the reverse.
pub fn directed_hausdorff(m: &BinaryMask, m_ref: &BinaryMask) -> Result<f64> {
    if m.is_empty() {
        return Err(Error::EmptyMask("source mask has no points".into()));
    }
    if m_ref.is_empty() {
        return Err(Error::EmptyMask("reference mask has no points".into()));
    }
    let mut worst: f64 = 0.0;
    for &(x, y) in &m.points {
        let mut best = f64::INFINITY;
        for &(rx, ry) in &m_ref.points {
            let dx = (x - rx) as f64;
            let dy = (y - ry) as f64;
            let d2 = dx * dx + dy * dy;
            if d2 < best {
                best = d2;
                if best == 0.0 {
                    break;
                }
            }
        }
        if best > worst {
            worst = best;
        }
    }
    Ok(worst.sqrt())
}

/// Location of an accessory box relative to a person box:
/// (dx/w̄, dy/h̄, log w/w̄, log h/h̄) with center displacements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AddOnOffset {
    pub dx_norm: f64,
    pub dy_norm: f64,
    pub log_w_ratio: f64,
    pub log_h_ratio: f64,
}

impl AddOnOffset {
    pub const ZERO: AddOnOffset = AddOnOffset {
        dx_norm: 0.0,
        dy_norm: 0.0,
        log_w_ratio: 0.0,
        log_h_ratio: 0.0,
    };

    pub fn as_array(&self) -> [f64; 4] {
        [self.dx_norm, self.dy_norm, self.log_w_ratio, self.log_h_ratio]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        AddOnOffset {
            dx_norm: a[0],
            dy_norm: a[1],
            log_w_ratio: a[2],
            log_h_ratio: a[3],
        }
    }
}

/// Encodes where `addon` sits relative to `person`.
pub fn encode_addon(person: &BoundingBox, addon: &BoundingBox) -> AddOnOffset {
    let (pcx, pcy) = person.center();
    let (acx, acy) = addon.center();
    AddOnOffset {
        dx_norm: (acx - pcx) / person.w,
        dy_norm: (acy - pcy) / person.h,
        log_w_ratio: (addon.w / person.w).ln(),
        log_h_ratio: (addon.h / person.h).ln(),
    }
}

/// Exact inverse of [`encode_addon`].
pub fn decode_addon(person: &BoundingBox, off: &AddOnOffset) -> BoundingBox {
    let (pcx, pcy) = person.center();
    let cx = pcx + off.dx_norm * person.w;
    let cy = pcy + off.dy_norm * person.h;
    let w = person.w * off.log_w_ratio.exp();
    let h = person.h * off.log_h_ratio.exp();
    BoundingBox::from_center(cx, cy, w, h)
}

/// First-step regression target: centered on the accessory but sized at 0.6
/// times the person, so the refinement step pools a person-scaled crop around
/// the predicted location.
pub fn intermediate_target(person: &BoundingBox, addon: &BoundingBox) -> BoundingBox {
    let (acx, acy) = addon.center();
    BoundingBox::from_center(acx, acy, 0.6 * person.w, 0.6 * person.h)
}

/// Log-compressed displacement and size descriptor of box `b` seen from
/// context box `c`; the clustering space for the relation codebook.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationDescriptor {
    pub dx_log: f64,
    pub dy_log: f64,
    pub log_w_ratio: f64,
    pub log_h_ratio: f64,
}

impl RelationDescriptor {
    pub fn as_array(&self) -> [f64; 4] {
        [self.dx_log, self.dy_log, self.log_w_ratio, self.log_h_ratio]
    }
}

fn signed_log1p(v: f64) -> f64 {
    v.signum() * v.abs().ln_1p()
}

/// Center displacement of `b` from `c` in units of c's dimensions, compressed
/// as sign(d)·log(1+|d|), concatenated with log size ratios of b over c.
pub fn relation_descriptor(c: &BoundingBox, b: &BoundingBox) -> RelationDescriptor {
    let (ccx, ccy) = c.center();
    let (bcx, bcy) = b.center();
    RelationDescriptor {
        dx_log: signed_log1p((bcx - ccx) / c.w),
        dy_log: signed_log1p((bcy - ccy) / c.h),
        log_w_ratio: (b.w / c.w).ln(),
        log_h_ratio: (b.h / c.h).ln(),
    }
}

/// Scales a box about its center and clips it to the image. If clipping would
/// leave nothing (box entirely outside), falls back to a 1-pixel box at the
/// clamped center so the result always has positive dims.
pub fn expand_box(b: &BoundingBox, factor: f64, bounds: (f64, f64)) -> BoundingBox {
    debug_assert!(factor > 0.0);
    let (w_img, h_img) = bounds;
    let (cx, cy) = b.center();
    let w = b.w * factor;
    let h = b.h * factor;
    let x0 = (cx - w / 2.0).max(0.0);
    let y0 = (cy - h / 2.0).max(0.0);
    let x1 = (cx + w / 2.0).min(w_img);
    let y1 = (cy + h / 2.0).min(h_img);
    if x1 > x0 && y1 > y0 {
        BoundingBox::new(x0, y0, x1 - x0, y1 - y0)
    } else {
        let px = cx.clamp(0.0, w_img - 1.0);
        let py = cy.clamp(0.0, h_img - 1.0);
        BoundingBox::new(px, py, 1.0, 1.0)
    }
}

/// Clips a box to the image, preserving as much of it as possible.
pub fn clip_box(b: &BoundingBox, bounds: (f64, f64)) -> BoundingBox {
    expand_box(b, 1.0, bounds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h)
    }

    #[test]
    fn iou_identity_and_disjoint() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        let b = bb(20.0, 20.0, 5.0, 5.0);
        assert_eq!(iou(&a, &b), 0.0);
    }

    #[test]
    fn iou_hand_case() {
        // intersection 1, union 7
        let a = bb(0.0, 0.0, 2.0, 2.0);
        let b = bb(1.0, 1.0, 2.0, 2.0);
        assert!((iou(&a, &b) - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn hausdorff_subset_is_zero() {
        let m = BinaryMask::new(vec![(1, 1), (2, 2)], (10, 10));
        let mref = BinaryMask::new(vec![(0, 0), (1, 1), (2, 2), (3, 3)], (10, 10));
        assert_eq!(directed_hausdorff(&m, &mref).unwrap(), 0.0);
    }

    #[test]
    fn hausdorff_345() {
        let m = BinaryMask::new(vec![(0, 0)], (10, 10));
        let mref = BinaryMask::new(vec![(3, 4)], (10, 10));
        assert_eq!(directed_hausdorff(&m, &mref).unwrap(), 5.0);
    }

    #[test]
    fn hausdorff_empty_mask_errors() {
        let m = BinaryMask::new(vec![], (10, 10));
        let mref = BinaryMask::new(vec![(0, 0)], (10, 10));
        assert!(directed_hausdorff(&m, &mref).is_err());
        assert!(directed_hausdorff(&mref, &m).is_err());
    }

    #[test]
    fn hausdorff_is_directed() {
        // m inside mref: forward 0, reverse positive
        let m = BinaryMask::new(vec![(5, 5)], (20, 20));
        let mref = BinaryMask::new(vec![(5, 5), (10, 5)], (20, 20));
        assert_eq!(directed_hausdorff(&m, &mref).unwrap(), 0.0);
        assert_eq!(directed_hausdorff(&mref, &m).unwrap(), 5.0);
    }

    #[test]
    fn encode_identity() {
        let p = bb(0.0, 0.0, 100.0, 200.0);
        let off = encode_addon(&p, &p);
        assert_eq!(off, AddOnOffset::ZERO);
    }

    #[test]
    fn encode_hand_case() {
        // person (0,0,100,200), addon center offset (10,-20), size (50,40)
        let p = bb(0.0, 0.0, 100.0, 200.0);
        let a = BoundingBox::from_center(60.0, 80.0, 50.0, 40.0);
        let off = encode_addon(&p, &a);
        assert!((off.dx_norm - 0.1).abs() < 1e-12);
        assert!((off.dy_norm + 0.1).abs() < 1e-12);
        assert!((off.log_w_ratio - 0.5f64.ln()).abs() < 1e-12);
        assert!((off.log_h_ratio - 0.2f64.ln()).abs() < 1e-12);
        let back = decode_addon(&p, &off);
        assert!((back.x - a.x).abs() < 1e-9);
        assert!((back.y - a.y).abs() < 1e-9);
        assert!((back.w - a.w).abs() < 1e-9);
        assert!((back.h - a.h).abs() < 1e-9);
    }

    #[test]
    fn decode_doubling() {
        let p = bb(0.0, 0.0, 40.0, 60.0);
        let off = AddOnOffset {
            log_w_ratio: 2f64.ln(),
            ..AddOnOffset::ZERO
        };
        let d = decode_addon(&p, &off);
        assert!((d.w - 80.0).abs() < 1e-9);
        assert!((d.h - 60.0).abs() < 1e-9);
    }

    #[test]
    fn intermediate_target_shape() {
        let p = bb(0.0, 0.0, 100.0, 100.0);
        let a = BoundingBox::from_center(50.0, 50.0, 7.0, 13.0);
        let t = intermediate_target(&p, &a);
        assert_eq!(t.center(), a.center());
        assert!((t.w - 60.0).abs() < 1e-12);
        assert!((t.h - 60.0).abs() < 1e-12);
        // size independent of the addon size
        let a2 = BoundingBox::from_center(50.0, 50.0, 30.0, 2.0);
        let t2 = intermediate_target(&p, &a2);
        assert_eq!((t2.w, t2.h), (t.w, t.h));
    }

    #[test]
    fn relation_identity_and_unit() {
        let c = bb(10.0, 10.0, 20.0, 30.0);
        let r = relation_descriptor(&c, &c);
        assert_eq!(r.as_array(), [0.0; 4]);

        // normalized dx of e-1 maps to exactly 1
        let b = BoundingBox::from_center(
            c.center().0 + (std::f64::consts::E - 1.0) * c.w,
            c.center().1,
            c.w,
            c.h,
        );
        let r = relation_descriptor(&c, &b);
        assert!((r.dx_log - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expand_hand_case() {
        let b = bb(10.0, 10.0, 10.0, 10.0);
        let e = expand_box(&b, 1.2, (100.0, 100.0));
        assert!((e.x - 9.0).abs() < 1e-12);
        assert!((e.y - 9.0).abs() < 1e-12);
        assert!((e.w - 12.0).abs() < 1e-12);
        assert!((e.h - 12.0).abs() < 1e-12);
    }

    #[test]
    fn expand_clips_at_corner() {
        let b = bb(0.0, 0.0, 10.0, 10.0);
        let e = expand_box(&b, 2.0, (100.0, 100.0));
        assert_eq!((e.x, e.y), (0.0, 0.0));
        assert!((e.w - 15.0).abs() < 1e-12);
        assert!(e.w > 0.0 && e.h > 0.0);
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (
            -50.0..150.0f64,
            -50.0..150.0f64,
            0.5..80.0f64,
            0.5..80.0f64,
        )
            .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, w, h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou(&a, &b);
            let ba = iou(&b, &a);
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn encode_decode_roundtrip(p in arb_box(), a in arb_box()) {
            let off = encode_addon(&p, &a);
            let back = decode_addon(&p, &off);
            let scale = a.w.abs().max(a.h.abs()).max(1.0);
            prop_assert!((back.x - a.x).abs() / scale < 1e-9);
            prop_assert!((back.y - a.y).abs() / scale < 1e-9);
            prop_assert!((back.w - a.w).abs() / scale < 1e-9);
            prop_assert!((back.h - a.h).abs() / scale < 1e-9);
        }

        #[test]
        fn relation_antisymmetric_in_displacement(c in arb_box(), b in arb_box()) {
            // reflect b's center about c's center: displacement terms negate
            let (ccx, ccy) = c.center();
            let (bcx, bcy) = b.center();
            let reflected = BoundingBox::from_center(2.0 * ccx - bcx, 2.0 * ccy - bcy, b.w, b.h);
            let r = relation_descriptor(&c, &b);
            let rr = relation_descriptor(&c, &reflected);
            prop_assert!((r.dx_log + rr.dx_log).abs() < 1e-9);
            prop_assert!((r.dy_log + rr.dy_log).abs() < 1e-9);
            prop_assert!((r.log_w_ratio - rr.log_w_ratio).abs() < 1e-12);
        }
    }
}
