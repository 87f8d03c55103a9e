// Each test binary uses a different subset of these helpers.
#![allow(dead_code)]

use std::process::{Command, Output};

pub fn randsum(args: &[&str]) -> Output {
    randsum_env(args, &[])
}

pub fn randsum_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_randsum"));
    cmd.args(args).env_remove("RANDSUM_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 output")
}
