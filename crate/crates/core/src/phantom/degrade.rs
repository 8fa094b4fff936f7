use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{LabelGrid, Mask, ENHANCING, NORMAL_BRAIN};

/// Achieved Dice further than this from the target is flagged.
pub const DICE_TOLERANCE: f64 = 0.02;
pub const FLAG_TARGET_UNREACHABLE: &str = "target-unreachable:nearest-returned";
/// Shift search stops at the first (shortest) shift this close to the target.
const GOOD_ENOUGH: f64 = 0.005;
/// Largest per-axis shift tried by [`DegradeMethod::Shift`].
const MAX_SHIFT: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradeMethod {
    #[default]
    Shift,
    Erode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Degraded {
    pub mask: Mask,
    pub achieved_dice: f64,
    pub shift: [usize; 3],
    pub erosions: usize,
    pub flags: Vec<String>,
}

fn dice(a: usize, b: usize, overlap: usize) -> f64 {
    if a + b == 0 {
        1.0
    } else {
        2.0 * overlap as f64 / (a + b) as f64
    }
}

/// Translates a mask by whole voxels; `None` if any voxel would leave the grid.
pub fn shift_mask(mask: &Mask, t: [usize; 3]) -> Option<Mask> {
    let geom = mask.geometry();
    let dims = geom.dims;
    let mut data = vec![false; mask.len()];
    for (i, &v) in mask.data().iter().enumerate() {
        if v {
            let p = geom.coords(i);
            let q = [0, 1, 2].map(|a| p[a] + t[a]);
            if (0..3).any(|a| q[a] >= dims[a]) {
                return None;
            }
            data[geom.index(q[0], q[1], q[2])] = true;
        }
    }
    Some(Mask::new(geom.clone(), data).expect("same geometry"))
}

/// Dice between `mask` and its translate, without building the translate.
fn shifted_dice(mask: &Mask, voxels: &[[usize; 3]], t: [usize; 3]) -> Option<f64> {
    let dims = mask.dims();
    let mut overlap = 0;
    for p in voxels {
        let q = [0, 1, 2].map(|a| p[a] + t[a]);
        if (0..3).any(|a| q[a] >= dims[a]) {
            return None;
        }
        // p + t is in the mask iff p is in the mask shifted by -t.
        if p.iter().zip(&t).all(|(&c, &s)| c >= s) && *mask.get(p[0] - t[0], p[1] - t[1], p[2] - t[2]) {
            overlap += 1;
        }
    }
    Some(dice(voxels.len(), voxels.len(), overlap))
}

/// One step of 6-connected erosion; voxels on the grid border are removed.
pub fn erode(mask: &Mask) -> Mask {
    let geom = mask.geometry();
    let dims = geom.dims;
    let data = (0..mask.len())
        .map(|i| {
            if !mask.data()[i] {
                return false;
            }
            let p = geom.coords(i);
            (0..3).all(|a| {
                if p[a] == 0 || p[a] + 1 >= dims[a] {
                    return false;
                }
                let mut lo = p;
                let mut hi = p;
                lo[a] -= 1;
                hi[a] += 1;
                *mask.get(lo[0], lo[1], lo[2]) && *mask.get(hi[0], hi[1], hi[2])
            })
        })
        .collect();
    Mask::new(geom.clone(), data).expect("same geometry")
}

/// Predicted lesion whose Dice against `gt` is controlled. Shift takes the
/// shortest translation (0..=15 voxels per axis) within 0.005 of the target,
/// else the nearest one; erode erodes until Dice drops to the target or below.
pub fn degrade_to_dice(gt: &Mask, target: f64, method: DegradeMethod) -> Result<Degraded> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::Validation(format!("target Dice {target} outside (0, 1]")));
    }
    let n = gt.count();
    let mut out = Degraded { mask: gt.clone(), achieved_dice: 1.0, shift: [0; 3], erosions: 0, flags: vec![] };
    if target == 1.0 || n == 0 {
        return Ok(out);
    }
    match method {
        DegradeMethod::Shift => {
            let voxels: Vec<[usize; 3]> =
                gt.data().iter().enumerate().filter(|(_, &v)| v).map(|(i, _)| gt.geometry().coords(i)).collect();
            let mut best: Option<(f64, [usize; 3], f64)> = None;
            // Shortest shifts first, x before y before z at equal length.
            let mut shifts: Vec<[usize; 3]> = (0..=MAX_SHIFT)
                .flat_map(|x| (0..=MAX_SHIFT).flat_map(move |y| (0..=MAX_SHIFT).map(move |z| [x, y, z])))
                .collect();
            shifts.sort_by_key(|t| (t.iter().map(|v| v * v).sum::<usize>(), [t[2], t[1], t[0]]));
            for t in shifts {
                if let Some(d) = shifted_dice(gt, &voxels, t) {
                    let err = (d - target).abs();
                    if best.is_none_or(|(e, _, _)| err < e) {
                        best = Some((err, t, d));
                    }
                    if err <= GOOD_ENOUGH {
                        break;
                    }
                }
            }
            let (_, t, d) = best.expect("zero shift always fits");
            out.mask = shift_mask(gt, t).expect("checked while searching");
            out.shift = t;
            out.achieved_dice = d;
        }
        DegradeMethod::Erode => {
            let mut cur = gt.clone();
            loop {
                let next = erode(&cur);
                let m = next.count();
                if m == 0 {
                    break;
                }
                out.erosions += 1;
                // Eroded masks are subsets of the original.
                out.achieved_dice = dice(n, m, m);
                cur = next;
                if out.achieved_dice <= target {
                    break;
                }
            }
            out.mask = cur;
        }
    }
    if (out.achieved_dice - target).abs() > DICE_TOLERANCE {
        out.flags.push(FLAG_TARGET_UNREACHABLE.to_string());
    }
    Ok(out)
}

/// Replaces the enhancing class of `gt` by `lesion`; vacated voxels become
/// normal brain.
pub fn with_lesion(gt: &LabelGrid, lesion: &Mask) -> Result<LabelGrid> {
    gt.geometry().ensure_aligned(lesion.geometry())?;
    let data = gt
        .data()
        .iter()
        .zip(lesion.data())
        .map(|(&l, &m)| if m { ENHANCING } else if l == ENHANCING { NORMAL_BRAIN } else { l })
        .collect();
    LabelGrid::new(gt.geometry().clone(), data)
}
