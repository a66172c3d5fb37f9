pub mod channel;
pub mod error;
pub mod linalg;
pub mod model;
pub mod digital;
pub mod robust;
pub mod hybrid;
pub mod noiseless;
pub mod bench;
pub mod scenario;
pub mod validate;
