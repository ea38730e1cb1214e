//! Skeleton representations of one sequence: joints, rigid bodies, relative motion.
use std::sync::Arc;

use glds::skeleton::{extract, extract_multiview, normalize, MultiviewSequence, Representation, SequenceMeta, SkeletonSequence, Topology};

fn wave(topology: &Arc<Topology>, frames: usize, phase: f64) -> glds::error::Result<SkeletonSequence> {
    let n = topology.joint_count;
    let data = (0..frames)
        .map(|t| {
            let s = t as f64 * 0.2 + phase;
            (0..n)
                .map(|j| {
                    let j = j as f64;
                    [0.1 * j + 0.05 * (s + j).sin(), 0.3 * (0.7 * j).cos(), 2.5 + 0.02 * (s * 0.5 + j).cos()]
                })
                .collect()
        })
        .collect();
    SkeletonSequence::new(data, topology.clone(), SequenceMeta::default())
}

fn main() -> glds::error::Result<()> {
    let topology = Arc::new(Topology::msr_action3d());
    println!("{} joints, {} rigid bodies, hip at {}", topology.joint_count, topology.rigid_bodies(), topology.hip_index);
    let seq = normalize(&wave(&topology, 30, 0.0)?, topology.hip_index)?;
    for kind in Representation::ALL.into_iter().filter(|k| !k.is_multiview()) {
        let series = extract(&seq, kind)?;
        println!("{kind}: frame shape {:?}, {} frames", series.frame_shape(), series.len());
    }
    let views = vec![wave(&topology, 30, 0.0)?, wave(&topology, 24, 1.0)?, wave(&topology, 27, 2.0)?];
    let mv = MultiviewSequence::new(views)?;
    let rb4 = extract_multiview(&mv, Representation::Rb4)?;
    println!("4RB: frame shape {:?}, {} frames", rb4.frame_shape(), rb4.len());
    Ok(())
}
