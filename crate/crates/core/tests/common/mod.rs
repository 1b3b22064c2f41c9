#![allow(dead_code)]

pub mod gradcheck;
pub mod opcases;
pub mod configcases;
pub mod composite;
