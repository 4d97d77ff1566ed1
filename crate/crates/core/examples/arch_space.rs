//! The 15625-cell search space: ids, mutation and materialized networks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gradsign::arch::*;
use gradsign::tensor::Model;

fn main() -> gradsign::Result<()> {
    let space = SearchSpaceSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    println!("{SPACE_SIZE} cells, {NUM_EDGES} edges, ops: {:?}", Op::ALL.map(Op::name));
    for _ in 0..5 {
        let arch = random_arch(&mut rng);
        let child = mutate_arch(&arch, &mut rng);
        let net = materialize(&arch, &space, 2, 2);
        assert_eq!(decode_arch(arch.id() as u64)?, arch);
        println!(
            "id {:>5} {arch}  params {:>4}  relu {:<5}  mutant {:>5} (hamming {})",
            arch.id(),
            net.param_count(),
            arch.has_relu(),
            child.id(),
            arch.hamming(&child)
        );
    }
    Ok(())
}
