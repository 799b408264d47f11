use std::fs;
use std::path::Path;

use iecode::codegen::{render_prompt, RenderOptions, RESULT_OPENER};
use iecode::ingest::{load_jsonl, SpanCheck};
use iecode::outparse::{parse_result, ParseStatus};
use iecode::regularize::RegularizationTrace;
use iecode::schema::{validate_schema, TaskSchema};

pub struct Case {
    pub name: String,
    pub rendered: String,
    pub expected: String,
}

pub fn render_case(dir: &Path) -> Case {
    let schema = TaskSchema::load(&dir.join("schema.toml")).unwrap();
    assert_eq!(validate_schema(&schema), vec![], "{}", dir.display());
    let opts: RenderOptions = match fs::read_to_string(dir.join("render.toml")) {
        Ok(s) => toml::from_str(&s).unwrap(),
        Err(_) => RenderOptions::default(),
    };
    let load = load_jsonl(&dir.join("doc.json"), &schema, SpanCheck::Strict).unwrap();
    assert!(load.rejects.is_empty(), "{:?}", load.rejects);
    let doc = &load.documents[0];
    let ex = render_prompt(&schema, doc, &opts, &RegularizationTrace::identity(&schema, 0)).unwrap();
    let back = parse_result(ex.gold_list(), &schema);
    assert_eq!(back.status, ParseStatus::Ok);
    assert_eq!(back.annotations, doc.gold, "{}", dir.display());
    assert!(ex.prompt[ex.split_byte_offset()..].starts_with(RESULT_OPENER));
    Case {
        name: dir.file_name().unwrap().to_string_lossy().into_owned(),
        rendered: ex.prompt,
        expected: fs::read_to_string(dir.join("expected.py")).unwrap(),
    }
}

pub fn cases() -> Vec<Case> {
    let mut dirs: Vec<_> = fs::read_dir(super::fixture("golden"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    dirs.iter().map(|d| render_case(d)).collect()
}
