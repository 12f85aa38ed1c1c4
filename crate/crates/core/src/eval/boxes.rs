use crate::tensor::{Rect, Tensor};

/// Tightest rect around the nonzero pixels of an `[H, W]` mask, `None` when
/// the mask is empty.
pub fn mask_to_box(mask: &Tensor) -> Option<Rect> {
    let [h, w] = mask.dims2().ok()?;
    let mut rect: Option<Rect> = None;
    for y in 0..h {
        for x in 0..w {
            if mask.data()[y * w + x] != 0.0 {
                let r = rect.get_or_insert(Rect::new(x, y, x, y));
                r.x0 = r.x0.min(x);
                r.x1 = r.x1.max(x);
                r.y0 = r.y0.min(y);
                r.y1 = r.y1.max(y);
            }
        }
    }
    rect
}

pub fn mask_area(mask: &Tensor) -> usize {
    mask.data().iter().filter(|&&v| v != 0.0).count()
}

/// Intersection over union of two inclusive pixel rects.
pub fn box_iou(a: Rect, b: Rect) -> f64 {
    let ix0 = a.x0.max(b.x0);
    let iy0 = a.y0.max(b.y0);
    let ix1 = a.x1.min(b.x1);
    let iy1 = a.y1.min(b.y1);
    let inter = if ix0 <= ix1 && iy0 <= iy1 {
        (ix1 + 1 - ix0) * (iy1 + 1 - iy0)
    } else {
        0
    };
    let union = a.area() + b.area() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// IoU of two binary masks of equal shape; 0 when both are empty.
pub fn mask_iou(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape(), "mask_iou shape mismatch");
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &q) in a.data().iter().zip(b.data()) {
        let (p, q) = (p != 0.0, q != 0.0);
        inter += (p && q) as usize;
        union += (p || q) as usize;
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}
