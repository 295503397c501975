use super::{RigidMotion, SliceStack, StackGeometry};
use crate::error::{Error, Result};
use crate::volume::{Axis, Volume};

/// Keep the samples at indices divisible by the factor along each axis. The
/// sampling phase is anchored at index 0.
pub fn decimate(v: &Volume, factors: [usize; 3]) -> Result<Volume> {
    let dims = v.dims();
    for a in 0..3 {
        if factors[a] == 0 || !dims[a].is_multiple_of(factors[a]) {
            return Err(Error::param(format!(
                "decimation factor {} does not divide axis {} of length {}",
                factors[a], a, dims[a]
            )));
        }
    }
    let out_dims = [
        dims[0] / factors[0],
        dims[1] / factors[1],
        dims[2] / factors[2],
    ];
    let sp = v.spacing();
    let spacing = [
        sp[0] * factors[0] as f64,
        sp[1] * factors[1] as f64,
        sp[2] * factors[2] as f64,
    ];
    let out = Volume::from_fn(out_dims, spacing, |x, y, z| {
        v.get(x * factors[0], y * factors[1], z * factors[2])
    })?;
    Ok(out.with_provenance(v.provenance()))
}

/// Extract plane `index` normal to `axis` as a `(nu, nv, 1)` volume in the
/// stack-local in-plane order of [`Axis::stack_order`].
pub fn slice_select(v: &Volume, axis: Axis, index: usize) -> Result<Volume> {
    let n = v.dims()[axis.index()];
    if index >= n {
        return Err(Error::param(format!(
            "slice index {index} out of range for axis {axis} of length {n}"
        )));
    }
    let [ua, va, _] = axis.stack_order();
    let dims = v.dims();
    let sp = v.spacing();
    let mut p = [0usize; 3];
    p[axis.index()] = index;
    Volume::from_fn(
        [dims[ua], dims[va], 1],
        [sp[ua], sp[va], sp[axis.index()]],
        |u, w, _| {
            let mut q = p;
            q[ua] = u;
            q[va] = w;
            v.get(q[0], q[1], q[2])
        },
    )
}

/// All planes normal to `axis`, with identity poses.
pub fn stack_select(v: &Volume, axis: Axis) -> Result<SliceStack> {
    let images = v.permute(axis.stack_order())?;
    let n = images.dims()[2];
    Ok(SliceStack {
        geometry: StackGeometry {
            axis,
            reference_dims: v.dims(),
            reference_spacing: v.spacing(),
            thickness_factor: 1,
            inplane_factor: 1,
        },
        images,
        poses: vec![RigidMotion::identity(); n],
    })
}

impl Axis {
    /// Reference-grid axes that become the stack-local `(u, v, slice)` axes
    /// for a stack whose slices are normal to `self`.
    pub fn stack_order(self) -> [usize; 3] {
        match self {
            Axis::Z => [0, 1, 2],
            Axis::Y => [0, 2, 1],
            Axis::X => [1, 2, 0],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(dims: [usize; 3]) -> Volume {
        Volume::from_fn(dims, [1.0; 3], |x, y, z| (x + 10 * y + 100 * z) as f32).unwrap()
    }

    #[test]
    fn decimate_shape_and_spacing() {
        let v = ramp([8, 8, 8]);
        let d = decimate(&v, [2, 2, 1]).unwrap();
        assert_eq!(d.dims(), [4, 4, 8]);
        assert_eq!(d.spacing(), [2.0, 2.0, 1.0]);
        assert_eq!(d.get(3, 1, 5), v.get(6, 2, 5));
        assert_eq!(decimate(&v, [1, 1, 1]).unwrap(), v);
        assert!(decimate(&v, [3, 1, 1]).is_err());
    }

    #[test]
    fn slice_of_constant_plane() {
        let v = Volume::from_fn(
            [5, 6, 7],
            [1.0; 3],
            |_, _, z| if z == 0 { 1.0 } else { 0.3 },
        )
        .unwrap();
        let s = slice_select(&v, Axis::Z, 0).unwrap();
        assert_eq!(s.dims(), [5, 6, 1]);
        assert!(s.data().iter().all(|&x| x == 1.0));
        assert!(slice_select(&v, Axis::Z, 7).is_err());
        assert_eq!(slice_select(&v, Axis::X, 2).unwrap().dims(), [6, 7, 1]);
    }

    #[test]
    fn stack_partitions_volume() {
        let v = ramp([5, 6, 7]);
        for axis in Axis::ALL {
            let st = stack_select(&v, axis).unwrap();
            assert_eq!(st.len(), v.dims()[axis.index()]);
            assert!(st.poses.iter().all(|p| p.is_identity()));
            let mut rebuilt = Volume::zeros(v.dims(), v.spacing()).unwrap();
            let order = axis.stack_order();
            for s in 0..st.len() {
                let img = st.slice(s);
                let direct = slice_select(&v, axis, s).unwrap();
                assert_eq!(img.data(), direct.data());
                for w in 0..img.dims()[1] {
                    for u in 0..img.dims()[0] {
                        let mut q = [0; 3];
                        q[order[0]] = u;
                        q[order[1]] = w;
                        q[order[2]] = s;
                        rebuilt.set(q[0], q[1], q[2], img.get(u, w, 0));
                    }
                }
            }
            assert_eq!(rebuilt.data(), v.data());
        }
    }
}
