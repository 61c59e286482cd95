//! Session server: a virtual pedestrian steered by a remote client, guided by the
//! engine, streamed back as JSON text frames over a web socket.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{ClientBody, ClientMessage, ServerBody, ServerMessage, PROTOCOL_VERSION};
pub use server::{bind_from_env, load_routes_dir, router, serve, AppState, BIND_ENV, DEFAULT_BIND};
pub use session::{Session, SessionConfig, SessionError, SessionMode};
