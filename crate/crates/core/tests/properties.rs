use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;

use pgft_core::clustering::kmeans_geometry;
use pgft_core::coding::{
    dequantize, entropy_decode, entropy_encode, quantize, read_bitstream, write_bitstream, CodingMode, FrameContexts,
    FrameRecord, FrameType, StreamHeader,
};
use pgft_core::eval::{bd_br, psnr, RdPoint, PEAK_8BIT};
use pgft_core::graph::{combinatorial_laplacian, generalized_laplacian, normal_weight, SpatialGraph};
use pgft_core::motion::icp_register;
use pgft_core::pointcloud_io::{devoxelize, rgb_to_yuv, voxelize, yuv_to_rgb, RawPointCloud};
use pgft_core::rdo::{choose_mode, lambda_from_q, LambdaModel, ModeCost};
use pgft_core::transform::{eigendecompose, gft_forward, ggft_forward};
use pgft_core::SequenceConfig;

fn coefficients() -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(
        prop_oneof![
            4 => Just(0i64),
            4 => -3i64..=3,
            2 => -5000i64..=5000,
            1 => -(1i64 << 40)..=(1i64 << 40),
        ],
        0..300,
    )
}

fn graph() -> impl Strategy<Value = SpatialGraph> {
    (2usize..24).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
        let m = pairs.len();
        prop::collection::vec((any::<bool>(), 0.05f64..1.0), m).prop_map(move |picks| SpatialGraph {
            n,
            edges: pairs
                .iter()
                .zip(&picks)
                .filter(|(_, (keep, _))| *keep)
                .map(|(&(i, j), &(_, w))| (i, j, w))
                .collect(),
            epsilon_sq: 0.0,
            sigma_sq: 0.4,
        })
    })
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    v.map(|x| x / n)
}

fn direction() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-1.0f64..1.0)
        .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3)
        .prop_map(unit)
}

fn record(frame_type: FrameType) -> impl Strategy<Value = FrameRecord> {
    (
        any::<u64>(),
        prop::collection::vec((any::<bool>(), prop::collection::vec(any::<u8>(), 0..200)), 0..12),
    )
        .prop_map(move |(geometry_hash, clusters)| FrameRecord {
            frame_type,
            geometry_hash,
            modes: match frame_type {
                FrameType::Intra => Vec::new(),
                FrameType::Predicted => clusters
                    .iter()
                    .map(|(inter, _)| if *inter { CodingMode::Inter } else { CodingMode::Intra })
                    .collect(),
            },
            segments: clusters.into_iter().map(|(_, s)| s).collect(),
        })
}

fn rd_curve() -> impl Strategy<Value = Vec<RdPoint>> {
    (0.5f64..3.0, 4.0f64..9.0, 30.0f64..40.0).prop_map(|(r0, slope, p0)| {
        (0..5)
            .map(|i| {
                let psnr_y = p0 + 3.0 * i as f64;
                RdPoint {
                    rate: r0 * ((psnr_y - p0) / slope).exp(),
                    psnr_y,
                    psnr_u: psnr_y,
                    psnr_v: psnr_y,
                }
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn entropy_coding_is_lossless(values in coefficients()) {
        let bytes = entropy_encode(&values);
        prop_assert_eq!(entropy_decode(&bytes, values.len()).unwrap(), values);
    }

    #[test]
    fn cluster_segments_round_trip_with_shared_contexts(
        clusters in prop::collection::vec(
            (1usize..60).prop_flat_map(|n| prop::array::uniform3(prop::collection::vec(-40i64..=40, n))),
            1..6,
        )
    ) {
        let mut enc = FrameContexts::default();
        let mut segments = Vec::new();
        for c in &clusters {
            let channels = [c[0].as_slice(), c[1].as_slice(), c[2].as_slice()];
            let trial = enc.trial_bits(channels);
            let seg = enc.encode_cluster(channels);
            prop_assert_eq!(trial, 8 * seg.len() as u64);
            segments.push(seg);
        }
        let mut dec = FrameContexts::default();
        for (c, seg) in clusters.iter().zip(&segments) {
            let got = dec.decode_cluster(seg, c[0].len()).unwrap();
            prop_assert_eq!(&got, c);
        }
    }

    #[test]
    fn bitstream_round_trip_is_byte_exact(
        intra in record(FrameType::Intra),
        predicted in prop::collection::vec(record(FrameType::Predicted), 0..4),
        qstep in 0.01f64..64.0,
        grid_dim in 1u32..1 << 20,
    ) {
        let mut frames = vec![intra];
        frames.extend(predicted);
        let header = StreamHeader {
            config: SequenceConfig { grid_dim, qstep, ..SequenceConfig::default() },
            frame_count: frames.len() as u32,
        };
        let bytes = write_bitstream(&header, &frames).unwrap();
        let (h, f) = read_bitstream(&bytes).unwrap();
        prop_assert_eq!(&h, &header);
        prop_assert_eq!(&f, &frames);
        prop_assert_eq!(write_bitstream(&h, &f).unwrap(), bytes);
    }

    #[test]
    fn quantization_error_is_at_most_half_a_step(
        coeffs in prop::collection::vec(-1e5f64..1e5, 1..100),
        qstep in 0.01f64..100.0,
    ) {
        let block = quantize(&coeffs, qstep).unwrap();
        for (c, r) in coeffs.iter().zip(dequantize(&block)) {
            prop_assert!((c - r).abs() <= qstep / 2.0 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn mode_decision_is_scale_invariant(
        d in prop::array::uniform2(0.0f64..1e4),
        bits in prop::array::uniform2(1u64..100_000),
        points in 1usize..2000,
        lambda in 0.01f64..100.0,
        scale in 1u64..50,
    ) {
        let intra = ModeCost::new(CodingMode::Intra, d[0], bits[0], points, lambda);
        let inter = ModeCost::new(CodingMode::Inter, d[1], bits[1], points, lambda);
        let chosen = choose_mode(&intra, &inter);
        let (win, lose) = if chosen == CodingMode::Intra { (intra, inter) } else { (inter, intra) };
        prop_assert!(win.cost <= lose.cost);
        let s = scale as f64;
        let intra_s = ModeCost::new(CodingMode::Intra, d[0] * s, bits[0] * scale, points, lambda);
        let inter_s = ModeCost::new(CodingMode::Inter, d[1] * s, bits[1] * scale, points, lambda);
        // Near-ties may flip through rounding of the scaled costs.
        if (intra.cost - inter.cost).abs() > 1e-9 * intra.cost.max(inter.cost) {
            prop_assert_eq!(choose_mode(&intra_s, &inter_s), chosen);
        }
    }

    #[test]
    fn lambda_increases_with_q(alpha in 0.001f64..10.0, beta in 0.1f64..3.0, q in 0.5f64..64.0, dq in 0.01f64..8.0) {
        let model = LambdaModel { alpha, beta };
        prop_assert!(lambda_from_q(q + dq, &model).unwrap() > lambda_from_q(q, &model).unwrap());
    }

    #[test]
    fn edge_weight_ignores_normal_orientation(a in direction(), b in direction(), sigma_sq in 0.05f64..4.0) {
        let w = normal_weight(&a, &b, sigma_sq);
        let na = a.map(|x| -x);
        let nb = b.map(|x| -x);
        prop_assert_eq!(normal_weight(&na, &b, sigma_sq), w);
        prop_assert_eq!(normal_weight(&a, &nb, sigma_sq), w);
        prop_assert!(w > 0.0 && w <= 1.0);
    }

    #[test]
    fn generalized_laplacian_shifts_the_spectrum(g in graph()) {
        let l = combinatorial_laplacian(&g);
        let shifted = generalized_laplacian(&l);
        for i in 0..g.n {
            for j in 0..g.n {
                let eye = if i == j { 1.0 } else { 0.0 };
                prop_assert!((shifted.matrix[(i, j)] - l.matrix[(i, j)] - eye).abs() < 1e-12);
            }
        }
        let intra = eigendecompose(&l).unwrap();
        let inter = eigendecompose(&shifted).unwrap();
        for (a, b) in intra.eigenvalues.iter().zip(&inter.eigenvalues) {
            prop_assert!((b - a - 1.0).abs() < 1e-9);
        }
        prop_assert!(intra.generalized().spectral_residual(&shifted.matrix) < 1e-9);
    }

    #[test]
    fn transforms_conserve_energy(g in graph(), seed in prop::collection::vec(-200.0f64..200.0, 24)) {
        let basis = eigendecompose(&combinatorial_laplacian(&g)).unwrap();
        let f = &seed[..g.n];
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((norm(&gft_forward(f, &basis).unwrap()) - norm(f)).abs() < 1e-9);
        prop_assert!((norm(&ggft_forward(f, &basis.generalized()).unwrap()) - norm(f)).abs() < 1e-9);
    }

    #[test]
    fn eigendecomposition_is_reproducible(g in graph()) {
        let l = combinatorial_laplacian(&g);
        let a = eigendecompose(&l).unwrap();
        let b = eigendecompose(&l).unwrap();
        prop_assert_eq!(a.basis(), b.basis());
        prop_assert_eq!(a.eigenvalues, b.eigenvalues);
    }

    #[test]
    fn psnr_falls_as_errors_grow(
        orig in prop::collection::vec(prop::array::uniform3(-100.0f64..100.0), 1..50),
        err in prop::collection::vec(prop::array::uniform3(0.1f64..5.0), 50),
        scale in 1.01f64..4.0,
    ) {
        let recon = |s: f64| -> Vec<[f64; 3]> {
            orig.iter().zip(&err).map(|(o, e)| [0, 1, 2].map(|c| o[c] + s * e[c])).collect()
        };
        let small = psnr(&orig, &recon(1.0), PEAK_8BIT).unwrap();
        let large = psnr(&orig, &recon(scale), PEAK_8BIT).unwrap();
        prop_assert!(large.y < small.y && large.u < small.u && large.v < small.v);
    }

    #[test]
    fn bd_rate_is_antisymmetric(a in rd_curve(), b in rd_curve()) {
        prop_assert!(bd_br(&a, &a).unwrap().abs() < 1e-9);
        let ab = bd_br(&a, &b).unwrap();
        let ba = bd_br(&b, &a).unwrap();
        // Both are computed over the shared PSNR range, so the log-rate
        // differences are exact negatives; the percentages follow e^d − 1.
        let d = (1.0 + ab / 100.0).ln();
        prop_assert!(((1.0 + ba / 100.0).ln() + d).abs() < 1e-9);
    }

    #[test]
    fn yuv_round_trip_within_half_a_level(rgb in prop::array::uniform3(any::<u8>())) {
        let back = yuv_to_rgb(rgb_to_yuv(rgb));
        for c in 0..3 {
            prop_assert!((i16::from(back[c]) - i16::from(rgb[c])).abs() <= 1);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn voxel_averaging_is_idempotent(
        points in prop::collection::vec(
            (prop::array::uniform3(0.0f64..50.0), prop::array::uniform3(any::<u8>())),
            2..150,
        ),
        dim in 4u32..40,
    ) {
        let (positions, colors): (Vec<_>, Vec<_>) = points.into_iter().unzip();
        let raw = RawPointCloud::new(positions, colors).unwrap();
        let frame = voxelize(&raw, dim).unwrap();
        let again = voxelize(&raw, dim).unwrap();
        prop_assert_eq!(&again.coords, &frame.coords);
        prop_assert_eq!(&again.point_map, &frame.point_map);

        let per_point = devoxelize(&frame.attributes, &frame.point_map, raw.point_count()).unwrap();
        let mut sums: HashMap<usize, ([f64; 3], f64)> = HashMap::new();
        for (&v, a) in frame.point_map.iter().zip(&per_point) {
            let e = sums.entry(v).or_insert(([0.0; 3], 0.0));
            for c in 0..3 {
                e.0[c] += a[c];
            }
            e.1 += 1.0;
        }
        for (v, (s, n)) in sums {
            for c in 0..3 {
                prop_assert!((s[c] / n - frame.attributes[v][c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn clustering_ignores_input_order(
        coords in prop::collection::btree_set(prop::array::uniform3(0u32..64), 20..300),
        target in 10usize..80,
        rotate in 0usize..1000,
    ) {
        let coords: Vec<[u32; 3]> = coords.into_iter().collect();
        let a = kmeans_geometry(&coords, target).unwrap();
        prop_assert_eq!(&kmeans_geometry(&coords, target).unwrap(), &a);

        let shift = rotate % coords.len();
        let mut permuted = coords.clone();
        permuted.rotate_left(shift);
        permuted.reverse();
        let b = kmeans_geometry(&permuted, target).unwrap();
        let groups = |labels: &[usize], pts: &[[u32; 3]]| -> BTreeSet<BTreeSet<[u32; 3]>> {
            let mut by: HashMap<usize, BTreeSet<[u32; 3]>> = HashMap::new();
            for (l, p) in labels.iter().zip(pts) {
                by.entry(*l).or_default().insert(*p);
            }
            by.into_values().collect()
        };
        prop_assert_eq!(groups(&a.labels, &coords), groups(&b.labels, &permuted));
        for (i, p) in permuted.iter().enumerate() {
            let j = coords.iter().position(|q| q == p).unwrap();
            prop_assert_eq!(b.labels[i], a.labels[j]);
        }
    }

    #[test]
    fn icp_residual_never_increases(
        target in prop::collection::vec(prop::array::uniform3(-20.0f64..20.0), 8..80),
        shift in prop::array::uniform3(-3.0f64..3.0),
        angle in -0.3f64..0.3,
    ) {
        let (s, c) = angle.sin_cos();
        let source: Vec<[f64; 3]> = target
            .iter()
            .map(|p| [c * p[0] - s * p[1] + shift[0], s * p[0] + c * p[1] + shift[1], p[2] + shift[2]])
            .collect();
        let result = icp_register(&source, &target, 30, 1e-9).unwrap();
        for w in result.residuals.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
    }
}
