use maskvid_core::decoder::{commit_decode, DecodeConfig, FROZEN_SCORE};
use maskvid_core::io;
use maskvid_core::masking::sample_training_mask;
use maskvid_core::{
    commit_mask, cutoff_kth_smallest, decode, encode, gamma, make_condition, masked_count,
    Codebook, Cutoff, GridShape, InputToken, PottsParams, Rng, Schedule, TaskKind, TaskSpec,
    TokenGrid, TokenPredictor, VideoTensor,
};
use proptest::prelude::*;

fn schedule() -> impl Strategy<Value = Schedule> {
    prop::sample::select(Schedule::ALL.to_vec())
}

fn task() -> impl Strategy<Value = TaskKind> {
    prop::sample::select(TaskKind::ALL.to_vec())
}

fn shape() -> impl Strategy<Value = GridShape> {
    (
        1usize..4,
        1usize..4,
        1usize..4,
        1usize..3,
        1usize..3,
        1usize..3,
    )
        .prop_map(|(t, h, w, bt, bh, bw)| GridShape::new((t, h, w), (bt, bh, bw)).unwrap())
}

fn random_codebook(v: usize, dim: usize, rng: &mut Rng) -> Codebook {
    Codebook::new(v, dim, (0..v * dim).map(|_| rng.uniform() as f32).collect()).unwrap()
}

fn random_video(shape: &GridShape, channels: usize, rng: &mut Rng) -> VideoTensor {
    let d = shape.video_dims();
    let data = (0..d.voxels() * channels)
        .map(|_| rng.uniform() as f32)
        .collect();
    VideoTensor::new(d.t, d.h, d.w, channels, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gamma_is_monotone_with_exact_endpoints(s in schedule(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        prop_assert_eq!(gamma(s, 0.0).unwrap(), 1.0);
        prop_assert_eq!(gamma(s, 1.0).unwrap(), 0.0);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(gamma(s, lo).unwrap() >= gamma(s, hi).unwrap());
        let g = gamma(s, a).unwrap();
        prop_assert!((0.0..=1.0).contains(&g));
    }

    #[test]
    fn cutoff_selects_exactly_k(scores in prop::collection::vec(0u8..4, 1..40), k_frac in 0.0f64..=1.0) {
        let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
        let k = (k_frac * scores.len() as f64).round() as usize;
        let c = cutoff_kth_smallest(&scores, k).unwrap();
        prop_assert_eq!(c.count_selected(&scores), k);
        if k == 0 {
            prop_assert_eq!(c, Cutoff::NegInfinity);
        }
    }

    #[test]
    fn commit_mask_never_invents_tokens(seed in any::<u64>(), n in 1usize..30) {
        let mut rng = Rng::new(seed);
        let current: Vec<u32> = (0..n).map(|_| rng.below(5) as u32).collect();
        let cond: Vec<u32> = (0..n).map(|_| 5 + rng.below(5) as u32).collect();
        let allpadded: Vec<bool> = (0..n).map(|_| rng.below(2) == 0).collect();
        let m = sample_training_mask(n, Schedule::Cosine, &mut rng).unwrap();
        let out = commit_mask(&current, &cond, &allpadded, &m.scores, m.cutoff).unwrap();
        let changed = out.iter().zip(&current).filter(|(o, c)| **o != InputToken::Visual(**c)).count();
        prop_assert_eq!(changed, m.masked_count);
        for i in 0..n {
            match out[i] {
                InputToken::Mask => prop_assert!(allpadded[i]),
                InputToken::Visual(v) => prop_assert!(v == current[i] || (v == cond[i] && !allpadded[i])),
            }
        }
    }

    #[test]
    fn flatten_round_trips(s in shape()) {
        for i in 0..s.len() {
            prop_assert_eq!(s.flatten_index(s.unflatten(i).unwrap()).unwrap(), i);
            let b = s.supervoxel_of(i).unwrap();
            prop_assert_eq!(s.token_of_voxel(b.t.start, b.y.start, b.x.start), i);
        }
    }

    #[test]
    fn encode_decode_encode_is_idempotent(s in shape(), seed in any::<u64>(), v in 1usize..8) {
        let mut rng = Rng::new(seed);
        let cb = random_codebook(v, s.block_voxels(), &mut rng);
        let video = random_video(&s, 1, &mut rng);
        let once = encode(&video, &cb, &s).unwrap();
        let back = decode(&once, &cb, &s).unwrap();
        prop_assert_eq!(encode(&back, &cb, &s).unwrap(), once.clone());
        prop_assert!(back.data().iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn files_round_trip_byte_identically(s in shape(), seed in any::<u64>(), v in 1usize..6, c in 0usize..3) {
        let mut rng = Rng::new(seed);
        let video = random_video(&s, 2, &mut rng);
        let b = io::video_to_bytes(&video).unwrap();
        prop_assert_eq!(io::video_to_bytes(&io::video_from_bytes(&b).unwrap()).unwrap(), b);

        let grid = TokenGrid::new(s, (0..s.len()).map(|_| rng.below(v) as u32).collect(), v).unwrap();
        let b = io::tokens_to_bytes(&grid, v).unwrap();
        let blocks = (s.block_t, s.block_h, s.block_w);
        let (g2, v2) = io::tokens_from_bytes(&b, blocks).unwrap();
        prop_assert_eq!(io::tokens_to_bytes(&g2, v2).unwrap(), b);

        let cb = random_codebook(v, s.block_voxels(), &mut rng);
        let b = io::codebook_to_bytes(&cb).unwrap();
        prop_assert_eq!(io::codebook_to_bytes(&io::codebook_from_bytes(&b).unwrap()).unwrap(), b);

        let mut p = PottsParams::zeros(v, s.len(), c);
        for (_, blk) in p.blocks_mut() {
            for x in blk.iter_mut() {
                *x = rng.uniform() * 4.0 - 2.0;
            }
        }
        let b = io::params_to_bytes(&p).unwrap();
        prop_assert_eq!(io::params_to_bytes(&io::params_from_bytes(&b).unwrap()).unwrap(), b);
    }

    #[test]
    fn decoding_freezes_monotonically(
        kind in task(),
        sched in schedule(),
        steps in 1usize..10,
        temperature in prop::sample::select(vec![0.0, 1.0, 4.5, 400.0]),
        seed in any::<u64>(),
    ) {
        let s = GridShape::new((4, 2, 2), (2, 2, 2)).unwrap();
        let mut rng = Rng::new(seed);
        let cb = random_codebook(6, 8, &mut rng);
        let mut p = PottsParams::zeros(6, s.len(), 2);
        for (_, blk) in p.blocks_mut() {
            for x in blk.iter_mut() {
                *x = rng.uniform() * 2.0 - 1.0;
            }
        }
        let video = random_video(&s, 1, &mut rng);
        let spec = TaskSpec::new(kind).with_class(1);
        let bundle = make_condition(&video, &spec, &cb, &s).unwrap();
        let cfg = DecodeConfig { steps, temperature, schedule: sched, seed };
        let (tokens, trace) = commit_decode(&p, &spec, &bundle, &cfg).unwrap();
        let n = s.len();
        let mut frozen = vec![None; n];
        for (t, st) in trace.steps.iter().enumerate() {
            let live = st.scores.iter().filter(|&&x| x != FROZEN_SCORE).count();
            prop_assert_eq!(live, masked_count(sched, (t + 1) as f64 / steps as f64, n).unwrap());
            for (i, f) in frozen.iter_mut().enumerate() {
                if let Some(id) = *f {
                    prop_assert_eq!(st.scores[i], FROZEN_SCORE);
                    prop_assert_eq!(st.estimate[i], id);
                } else if st.scores[i] == FROZEN_SCORE {
                    *f = Some(st.estimate[i]);
                }
            }
        }
        prop_assert!(frozen.iter().all(Option::is_some));
        prop_assert_eq!(trace.steps.last().unwrap().estimate.as_slice(), tokens.ids());
        // same seed and config, same output
        prop_assert_eq!(commit_decode(&p, &spec, &bundle, &cfg).unwrap().0, tokens);
    }

    #[test]
    fn predictor_rows_are_distributions(seed in any::<u64>(), kind in task(), scale in 0.0f64..50.0) {
        let s = GridShape::new((2, 2, 2), (1, 1, 1)).unwrap();
        let mut rng = Rng::new(seed);
        let mut p = PottsParams::zeros(5, s.len(), 3);
        for (_, blk) in p.blocks_mut() {
            for x in blk.iter_mut() {
                *x = (rng.uniform() - 0.5) * scale;
            }
        }
        let input: Vec<InputToken> = (0..s.len())
            .map(|_| if rng.below(2) == 0 { InputToken::Mask } else { InputToken::Visual(rng.below(5) as u32) })
            .collect();
        let class = kind.uses_class().then_some(2);
        p.predict(kind, class, &input, &s).unwrap().check_stochastic().unwrap();
    }
}
