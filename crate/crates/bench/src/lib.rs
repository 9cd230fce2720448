//! Shared fixtures for the retrieval benchmarks.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use hiret_core::{GalleryStore, HierEmbedding, HierSchedule, QueryEmbedding};

/// Random gallery plus queries on the given schedule, seeded.
pub fn random_fixture(
    schedule: &HierSchedule,
    gallery_size: usize,
    query_count: usize,
    seed: u64,
) -> (GalleryStore, Vec<QueryEmbedding>) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let rand_levels = |rng: &mut ChaCha12Rng| -> Vec<Vec<f32>> {
        schedule
            .dims()
            .iter()
            .map(|&d| (0..d).map(|_| rng.gen_range(-1.0f32..1.0)).collect())
            .collect()
    };
    let items = (0..gallery_size)
        .map(|i| HierEmbedding {
            id: i as u64,
            levels: rand_levels(&mut rng),
        })
        .collect();
    let store = GalleryStore::build(schedule.clone(), items).expect("valid fixture");
    let queries = (0..query_count)
        .map(|i| QueryEmbedding::new(1_000_000 + i as u64, rand_levels(&mut rng)))
        .collect();
    (store, queries)
}
