pub mod bitcore;
pub mod bounds;
pub mod commit;
pub mod error;
pub mod owf;
pub mod pamp;
pub mod protocol;
pub mod qsim;
pub mod rates;
pub mod recon;
pub mod wire;

mod codec;

pub use error::{Error, Result};
