mod common;

use std::collections::VecDeque;

use proptest::prelude::*;
use qnav::{Action, Observation, ReplayBuffer, Transition};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{chi_square_critical, chi_square_uniform};

fn tagged(tag: usize) -> Transition {
    let mut v = [0.0; 26];
    v[0] = tag as f64;
    let o = Observation::from_array(v);
    Transition { s: o, a: Action::new(tag % 5).unwrap(), r: tag as f64, s_next: o, done: false }
}

proptest! {
    #[test]
    fn eviction_is_first_in_first_out(capacity in 1usize..8, pushes in 0usize..40) {
        let mut buf = ReplayBuffer::new(capacity);
        let mut model = VecDeque::new();
        for i in 0..pushes {
            buf.push(tagged(i));
            model.push_back(i);
            if model.len() > capacity {
                model.pop_front();
            }
            prop_assert!(buf.len() <= capacity);
            let held: Vec<usize> = buf.iter().map(|t| t.r as usize).collect();
            prop_assert_eq!(&held, &model.iter().copied().collect::<Vec<_>>());
        }
    }

    #[test]
    fn samples_come_from_the_buffer(len in 1usize..50, batch in 1usize..100, seed: u64) {
        let mut buf = ReplayBuffer::new(64);
        (0..len).for_each(|i| buf.push(tagged(i)));
        let sample = buf.sample_batch(batch, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(sample.len(), batch);
        prop_assert!(sample.iter().all(|t| (t.r as usize) < len));
    }
}

#[test]
fn capacity_three_keeps_the_last_three() {
    let mut buf = ReplayBuffer::new(3);
    for i in 1..=5 {
        buf.push(tagged(i));
    }
    let held: Vec<usize> = buf.iter().map(|t| t.r as usize).collect();
    assert_eq!(held, vec![3, 4, 5]);
}

#[test]
fn sampling_is_uniform_over_slots() {
    let mut buf = ReplayBuffer::new(10);
    (0..10).for_each(|i| buf.push(tagged(i)));
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut counts = [0u64; 10];
    for t in buf.sample_batch(100_000, &mut rng).unwrap() {
        counts[t.r as usize] += 1;
    }
    let stat = chi_square_uniform(&counts);
    assert!(stat < chi_square_critical(9, 0.01), "chi-square {stat}, counts {counts:?}");
}

#[test]
fn empty_buffer_cannot_sample() {
    let buf = ReplayBuffer::new(4);
    assert!(buf.sample_batch(1, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
}
