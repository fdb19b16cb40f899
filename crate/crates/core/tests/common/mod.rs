#![allow(dead_code)]

pub mod audit;
pub mod channel;
pub mod grad;
pub mod loss_ids;
pub mod oracle_suite;
pub mod tiny;
