//! Brute-force references for the linear operators, checked on random
//! inputs no larger than 16 voxels per axis.

mod common;

use common::{max_diff, mirror, naive_blur, naive_conv, stuff};
use proptest::prelude::*;
use volsr::acquisition::{blur_separable_with, decimate, Boundary, PsfKernel};
use volsr::srnet::{conv3d_forward, tconv3d_forward, ConvSpec, TConvSpec, Tensor4};
use volsr::{Axis, Volume};

const TOL: f64 = 1e-6;

fn unit(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

fn blur_case() -> impl Strategy<Value = (Volume, Vec<f64>, Vec<Axis>, Boundary)> {
    (
        0usize..=3,
        prop::bool::ANY,
        prop::sample::subsequence(vec![0usize, 1, 2], 1..=3),
    )
        .prop_flat_map(|(h, mirror, axes)| {
            let lo = 2 * h + 1;
            (
                [lo..=16usize, lo..=16usize, lo..=16usize],
                prop::collection::vec(0.05f64..1.0, h + 1),
                Just(mirror),
                Just(axes),
            )
        })
        .prop_flat_map(|(dims, half, mirror, axes)| {
            let n: usize = dims.iter().product();
            (
                Just(dims),
                prop::collection::vec(0.0f32..1.0, n),
                Just(half),
                Just(mirror),
                Just(axes),
            )
        })
        .prop_map(|(dims, data, half, mirror, axes)| {
            let mut taps: Vec<f64> = half.iter().rev().cloned().collect();
            taps.extend(half.iter().skip(1));
            let sum: f64 = taps.iter().sum();
            taps.iter_mut().for_each(|t| *t /= sum);
            let axes = axes
                .into_iter()
                .map(|a| Axis::from_index(a).unwrap())
                .collect();
            let boundary = if mirror {
                Boundary::Mirror
            } else {
                Boundary::Zero
            };
            (
                Volume::new(dims, [1.0; 3], data).unwrap(),
                taps,
                axes,
                boundary,
            )
        })
}

fn decimate_case() -> impl Strategy<Value = (Volume, [usize; 3])> {
    [1usize..=4, 1usize..=4, 1usize..=4]
        .prop_flat_map(|f| ([1..=16 / f[0], 1..=16 / f[1], 1..=16 / f[2]], Just(f)))
        .prop_flat_map(|(m, f)| {
            let dims = [m[0] * f[0], m[1] * f[1], m[2] * f[2]];
            let n: usize = dims.iter().product();
            (Just(dims), prop::collection::vec(-1.0f32..1.0, n), Just(f))
        })
        .prop_map(|(dims, data, f)| (Volume::new(dims, [0.5, 1.0, 2.0], data).unwrap(), f))
}

/// Random odd kernel extents, channel counts and input size.
fn conv_case() -> impl Strategy<
    Value = (
        usize,
        usize,
        [usize; 3],
        [usize; 3],
        Vec<f64>,
        Vec<f64>,
        Vec<f64>,
    ),
> {
    (
        1usize..=3,
        1usize..=3,
        [0usize..=2, 0usize..=2, 0usize..=1],
        [1usize..=12, 1usize..=12, 1usize..=8],
    )
        .prop_flat_map(|(cin, cout, kh, dims)| {
            let kernel = [2 * kh[0] + 1, 2 * kh[1] + 1, 2 * kh[2] + 1];
            let taps: usize = kernel.iter().product();
            let n: usize = dims.iter().product();
            (
                Just(cin),
                Just(cout),
                Just(kernel),
                Just(dims),
                unit(cin * n),
                unit(cout * cin * taps),
                unit(cout),
            )
        })
}

fn tconv_case() -> impl Strategy<
    Value = (
        Axis,
        usize,
        usize,
        usize,
        [usize; 3],
        Vec<f64>,
        Vec<f64>,
        Vec<f64>,
    ),
> {
    (
        prop::bool::ANY,
        prop_oneof![Just(2usize), Just(4)],
        1usize..=2,
        1usize..=2,
    )
        .prop_flat_map(|(x_axis, stride, cin, cout)| {
            let axis = if x_axis { Axis::X } else { Axis::Y };
            let mut hi = [8usize, 8, 6];
            hi[axis.index()] = 16 / stride;
            let kernel = TConvSpec::<f64>::kernel_for(axis, stride);
            let taps: usize = kernel.iter().product();
            (
                [1..=hi[0], 1..=hi[1], 1..=hi[2]],
                Just((axis, stride, cin, cout, taps)),
            )
        })
        .prop_flat_map(|(dims, (axis, stride, cin, cout, taps))| {
            let n: usize = dims.iter().product();
            (
                Just(axis),
                Just(stride),
                Just(cin),
                Just(cout),
                Just(dims),
                unit(cin * n),
                unit(cout * cin * taps),
                unit(cout),
            )
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn blur_matches_brute_force((v, taps, axes, boundary) in blur_case()) {
        let k = PsfKernel::from_taps(taps.clone(), 2).unwrap();
        let got = blur_separable_with(&v, &k, &axes, boundary).unwrap();
        let got: Vec<f64> = got.data().iter().map(|&x| x as f64).collect();
        let want = naive_blur(&v, k.taps(), &axes, boundary);
        prop_assert!(max_diff(&got, &want) < TOL, "max diff {}", max_diff(&got, &want));
    }

    #[test]
    fn decimate_matches_brute_force((v, f) in decimate_case()) {
        let got = decimate(&v, f).unwrap();
        let d = v.dims();
        prop_assert_eq!(got.dims(), [d[0] / f[0], d[1] / f[1], d[2] / f[2]]);
        let sp = v.spacing();
        prop_assert_eq!(got.spacing(), [sp[0] * f[0] as f64, sp[1] * f[1] as f64, sp[2] * f[2] as f64]);
        let gd = got.dims();
        for z in 0..gd[2] {
            for y in 0..gd[1] {
                for x in 0..gd[0] {
                    let want = v.data()[((z * f[2]) * d[1] + y * f[1]) * d[0] + x * f[0]];
                    prop_assert_eq!(got.get(x, y, z), want);
                }
            }
        }
    }

    #[test]
    fn conv_matches_brute_force((cin, cout, kernel, dims, x, w, b) in conv_case()) {
        let s = ConvSpec::new(cin, cout, kernel, w, b).unwrap();
        let xt = Tensor4::new([cin, dims[0], dims[1], dims[2]], x.clone()).unwrap();
        let got = conv3d_forward(&xt, &s).unwrap();
        let want = naive_conv(&x, cin, dims, &s);
        prop_assert!(max_diff(got.data(), &want) < TOL);
    }

    #[test]
    fn tconv_matches_stuffed_brute_force((axis, stride, cin, cout, dims, x, w, b) in tconv_case()) {
        let kernel = TConvSpec::<f64>::kernel_for(axis, stride);
        let spec = TConvSpec::new(axis, stride, ConvSpec::new(cin, cout, kernel, w, b).unwrap()).unwrap();
        let (stuffed, sd) = stuff(&x, cin, dims, axis, stride);
        let xt = Tensor4::new([cin, dims[0], dims[1], dims[2]], x).unwrap();
        let got = tconv3d_forward(&xt, &spec).unwrap();
        prop_assert_eq!(got.spatial(), sd);
        let want = naive_conv(&stuffed, cin, sd, &spec.conv);
        prop_assert!(max_diff(got.data(), &want) < TOL);
    }
}

#[test]
fn mirror_reference_is_reflect_101() {
    let got: Vec<usize> = (-4..9).map(|i| mirror(i, 4)).collect();
    assert_eq!(got, [2, 3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1, 2]);
}
