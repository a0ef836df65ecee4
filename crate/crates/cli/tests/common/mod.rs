//! Helpers shared by the CLI test targets: running the binary and
//! synthesizing small WAV corpora. Not every target uses every helper.
#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use voxtube::signal::write_wav;
use voxtube::synth;

pub fn voxtube_cmd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_voxtube"))
}

pub fn run(args: &[&str]) -> Output {
    voxtube_cmd().args(args).output().expect("binary runs")
}

pub fn exit_code(output: &Output) -> i32 {
    output.status.code().expect("terminated by exit, not signal")
}

pub fn stdout_str(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).expect("utf8 stdout")
}

pub fn stderr_str(output: &Output) -> String {
    String::from_utf8(output.stderr.clone()).expect("utf8 stderr")
}

pub fn stdout_json(output: &Output) -> serde_json::Value {
    serde_json::from_str(&stdout_str(output)).expect("stdout is JSON")
}

pub fn write_voice(path: &Path, f0: f64, seconds: f64) {
    let buf = synth::voice(f0, 6.0, 12, seconds, 16000);
    write_wav(path, &buf).expect("write wav");
}

/// Two speakers, three utterances each: `alice/` around 150 Hz and
/// `bob/` around 280 Hz.
pub fn write_corpus(root: &Path) {
    for (speaker, base_f0) in [("alice", 150.0), ("bob", 280.0)] {
        let dir = root.join(speaker);
        std::fs::create_dir_all(&dir).expect("mkdir speaker");
        for i in 0..3 {
            write_voice(&dir.join(format!("utt{i}.wav")), base_f0 + 2.0 * i as f64, 0.6);
        }
    }
}
