//! A symbolic lab for the EDHOC key exchange: a term algebra with
//! Diffie-Hellman and XOR equations, the key schedule, wire messages,
//! the four method combinations as state machines, a Dolev-Yao network
//! attacker, and trace-property checkers.

pub mod attacker;
pub mod environment;
pub mod key_schedule;
pub mod properties;
pub mod roles;
pub mod scenarios;
pub mod term;
pub mod wire;
