//! Distributed training of graph convolutional networks with approximated
//! subgraph overlap.
//!
//! The library covers the full pipeline: synthetic dataset generation
//! (stochastic block model), balanced edge-cut partitioning, breadth-first
//! overlap sampling that extends each partition with vertices approximated
//! from the other partitions, two GCN variants trained from scratch, and a
//! synchronous master/worker loop that averages parameters once per epoch.
//! Workers can run in-process (sequential or threaded) or as separate
//! processes over a small length-prefixed TCP protocol.

pub mod approx;
pub mod datagen;
pub mod dense;
pub mod error;
pub mod graph;
pub mod io;
pub mod model;
pub mod partition;
pub mod rng;
pub mod train;
pub mod transport;

pub use approx::{
    build_extended_partitions, nts, overhead_of, sample_from_partition, sampling_work,
    ExtendedPartition, OverlapConfig, SamplingWork,
};
pub use datagen::{delete_training_vertices, generate_sbm, Dataset, SbmConfig};
pub use dense::{DenseMatrix, Real};
pub use error::{Error, Result};
pub use graph::{
    induced_subgraph, normalize_adjacency, spmm, FeatureMatrix, Graph, Labels, NormalizedAdjacency,
    Role, SplitMask, SubgraphMap,
};
pub use model::{
    adam_step, build_sage_plan, cross_entropy_loss, init_params, kw_backward, kw_forward,
    micro_f1, sage_apply, sage_backward, sage_forward, sage_full_forward, Activations, AdamState,
    ModelConfig, ModelKind, ModelParams, SagePlan, SageTrace,
};
pub use partition::{
    balance_slack, cut_stats, load_partition_file, partition_bfs_balanced, save_partition_file,
    PartitionAssignment, PartitionStats,
};
pub use train::{
    aggregate, evaluate_global, train_distributed, train_distributed_with_partition, train_single,
    worker_epoch, EpochReport, GlobalEvaluator, LocalReport, TrainConfig, TrainOutcome,
    WorkerAssignment, WorkerState,
};
pub use transport::{
    decode_frame, deserialize_params, encode_frame, read_frame, run_worker,
    run_worker_with_retry, serialize_params, worker_loop, write_frame, FrameConn, FrameKind,
    LocalPool, Message, PoolStats, TcpMaster, TcpPool, WorkerPool,
};
