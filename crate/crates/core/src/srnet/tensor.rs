use crate::error::{Error, Result};
use crate::num::Real;
use crate::volume::Volume;

/// Multi-channel feature map with shape `(c, dx, dy, dz)`.
///
/// Channel-major: channel `k` is one contiguous block laid out like a
/// [`Volume`] (x fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T> {
    shape: [usize; 4],
    data: Vec<T>,
}

impl<T: Real> Tensor4<T> {
    pub fn new(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::shape(format!(
                "tensor dims must be >= 1, got {shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(Error::shape(format!(
                "tensor {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor4 { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Result<Self> {
        Self::new(shape, vec![T::ZERO; shape.iter().product()])
    }

    pub fn from_volume(v: &Volume) -> Self {
        let d = v.dims();
        Tensor4 {
            shape: [1, d[0], d[1], d[2]],
            data: v.data().iter().map(|&x| T::from_f64(x as f64)).collect(),
        }
    }

    /// Single-channel tensor to volume.
    pub fn to_volume(&self, spacing: [f64; 3]) -> Result<Volume> {
        if self.shape[0] != 1 {
            return Err(Error::shape(format!(
                "only single-channel tensors convert to volumes, got {} channels",
                self.shape[0]
            )));
        }
        Volume::new(
            self.spatial(),
            spacing,
            self.data.iter().map(|x| x.to_f64() as f32).collect(),
        )
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn channels(&self) -> usize {
        self.shape[0]
    }

    pub fn spatial(&self) -> [usize; 3] {
        [self.shape[1], self.shape[2], self.shape[3]]
    }

    /// Voxels per channel.
    pub fn voxels(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn channel(&self, k: usize) -> &[T] {
        let n = self.voxels();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> Tensor4<U> {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|x| U::from_f64(x.to_f64())).collect(),
        }
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "tensor shapes differ: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    /// Sub-block of every channel spanning z-planes `z0..z0 + nz`.
    pub fn z_range(&self, z0: usize, nz: usize) -> Result<Self> {
        let [c, dx, dy, dz] = self.shape;
        if nz == 0 || z0 + nz > dz {
            return Err(Error::shape(format!(
                "z range {z0}+{nz} outside depth {dz}"
            )));
        }
        let plane = dx * dy;
        let mut data = Vec::with_capacity(c * plane * nz);
        for k in 0..c {
            let ch = self.channel(k);
            data.extend_from_slice(&ch[z0 * plane..(z0 + nz) * plane]);
        }
        Tensor4::new([c, dx, dy, nz], data)
    }
}

/// Elementwise `max(0, x)`.
pub fn relu<T: Real>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(|v| if v > T::ZERO { v } else { T::ZERO })
}

/// Elementwise sum of two equally shaped tensors.
pub fn residual_add<T: Real>(x: &Tensor4<T>, skip: &Tensor4<T>) -> Result<Tensor4<T>> {
    x.check_same_shape(skip)?;
    let data = x
        .data
        .iter()
        .zip(&skip.data)
        .map(|(&a, &b)| a + b)
        .collect();
    Ok(Tensor4 {
        shape: x.shape,
        data,
    })
}

pub(crate) fn relu_in_place<T: Real>(x: &mut Tensor4<T>) {
    for v in &mut x.data {
        if !(*v > T::ZERO) {
            *v = T::ZERO;
        }
    }
}

/// Zero the gradient wherever the post-activation value is not positive.
pub(crate) fn relu_mask_in_place<T: Real>(grad: &mut Tensor4<T>, activation: &Tensor4<T>) {
    for (g, &a) in grad.data.iter_mut().zip(&activation.data) {
        if !(a > T::ZERO) {
            *g = T::ZERO;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_and_residual() {
        let x = Tensor4::<f32>::new([1, 3, 1, 1], vec![-1.0, 0.0, 2.0]).unwrap();
        let r = relu(&x);
        assert_eq!(r.data(), &[0.0, 0.0, 2.0]);
        assert_eq!(relu(&r), r);
        let z = Tensor4::zeros([1, 3, 1, 1]).unwrap();
        assert_eq!(residual_add(&x, &z).unwrap(), x);
        let bad = Tensor4::<f32>::zeros([1, 1, 3, 1]).unwrap();
        assert!(residual_add(&x, &bad).is_err());
    }

    #[test]
    fn shape_validation_and_z_range() {
        assert!(Tensor4::<f32>::new([1, 2, 2, 0], vec![]).is_err());
        assert!(Tensor4::<f32>::new([1, 2, 2, 1], vec![0.0; 3]).is_err());
        let t = Tensor4::<f64>::new([2, 1, 1, 3], (0..6).map(|i| i as f64).collect()).unwrap();
        let s = t.z_range(1, 2).unwrap();
        assert_eq!(s.data(), &[1.0, 2.0, 4.0, 5.0]);
        assert!(t.z_range(2, 2).is_err());
    }
}
