//! One module per subcommand. Each takes a parsed config plus the resolved
//! output directory and returns the finished run manifest.

pub mod heatmap;
pub mod inconsistency;
pub mod train_offline;
pub mod train_online;
pub mod verify_lemmas;
