#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use ringtower_cli::cli::{DetectArgs, Inputs};
use ringtower_core::synth::{default_corpus, write_case, ManifestCase, SceneScript};
use ringtower_core::Exec;

pub struct Fixture {
    _dir: tempfile::TempDir,
    pub root: PathBuf,
    pub case: ManifestCase,
    pub script: SceneScript,
}

impl Fixture {
    pub fn frames(&self) -> PathBuf {
        self.root.join(&self.case.frames)
    }

    pub fn timestamps(&self) -> PathBuf {
        self.root.join(&self.case.timestamps)
    }

    pub fn segmentation(&self) -> PathBuf {
        self.root.join(&self.case.segmentation)
    }

    pub fn truth(&self) -> PathBuf {
        self.root.join(&self.case.truth)
    }

    pub fn inputs(&self) -> Inputs {
        Inputs {
            frames: self.frames(),
            timestamps: Some(self.timestamps()),
            segmentation: self.segmentation(),
            config: None,
        }
    }

    pub fn detect_args(&self, out: &Path) -> DetectArgs {
        DetectArgs {
            inputs: self.inputs(),
            out: out.to_path_buf(),
            trace_dir: None,
        }
    }
}

pub fn corpus_script(name: &str) -> SceneScript {
    default_corpus()
        .into_iter()
        .find(|s| s.name == name)
        .unwrap_or_else(|| panic!("no corpus case {name}"))
}

pub fn render(script: SceneScript) -> Fixture {
    let dir = tempfile::Builder::new()
        .prefix("ringtower-fixture")
        .tempdir_in(env!("CARGO_TARGET_TMPDIR"))
        .unwrap();
    let root = dir.path().to_path_buf();
    let case = write_case(Exec::default(), &script, &root).unwrap();
    Fixture {
        _dir: dir,
        root,
        case,
        script,
    }
}

/// Corpus case with collisions on three towers, rendered once per test binary.
pub fn multi() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| render(corpus_script("multi-towers")))
}

pub fn still() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| render(corpus_script("static-a")))
}
