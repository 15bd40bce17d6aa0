use std::io::Cursor;

use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use tagflow_core::ingest::{read_canonical, write_canonical};
use tagflow_core::{
    monthly_trajectory, simulate, FrequencyTable, JointAssignmentTable, ModelParams, Month,
    PostsParser, QuestionRecord, Selection, UrnState,
};

/// Deterministic skewed corpus over 36 months.
fn corpus(n: u64) -> Vec<QuestionRecord> {
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    let mut month = Month::new(2010, 1).unwrap();
    (0..n)
        .map(|id| {
            if id > 0 && id % (n / 36).max(1) == 0 {
                month = month.succ();
            }
            let k = 1 + next() % 5;
            let mut tags: Vec<String> = Vec::new();
            while tags.len() < k as usize {
                let u = (next() % 1000) as f64 / 1000.0;
                let t = format!("tag-{}", (u * u * 3000.0) as u64);
                if !tags.contains(&t) {
                    tags.push(t);
                }
            }
            QuestionRecord::new(id, month, &tags).unwrap()
        })
        .collect()
}

fn dump(records: &[QuestionRecord]) -> String {
    let mut s = String::from("<?xml version=\"1.0\" encoding=\"utf-8\"?>\n<posts>\n");
    for r in records {
        let tags: String = r.tags.iter().map(|t| format!("&lt;{t}&gt;")).collect();
        s.push_str(&format!(
            "  <row Id=\"{}\" PostTypeId=\"1\" CreationDate=\"{}-15T08:00:00.000\" Score=\"2\" \
             Body=\"&lt;p&gt;text&lt;/p&gt;\" Tags=\"{tags}\" />\n",
            r.question_id, r.month
        ));
    }
    s.push_str("</posts>\n");
    s
}

fn tables(c: &mut Criterion) {
    let records = corpus(20_000);
    let assignments: u64 = records.iter().map(|r| r.tags.len() as u64).sum();
    let mut g = c.benchmark_group("tables");
    g.throughput(Throughput::Elements(assignments));
    g.bench_function("frequency_add", |b| {
        b.iter(|| {
            let mut t = FrequencyTable::new();
            for r in &records {
                for tag in &r.tags {
                    t.add(tag.as_str());
                }
            }
            black_box(t.clogc_sum())
        })
    });
    g.bench_function("joint_add", |b| {
        b.iter(|| {
            let mut t = JointAssignmentTable::new();
            for r in &records {
                for tag in &r.tags {
                    t.add(r.question_id, tag.as_str());
                }
            }
            black_box(t.total_assignments())
        })
    });
    g.finish();
}

fn simulator(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulator");
    for (name, sel) in [
        ("proportional", Selection::Proportional),
        ("softmax", Selection::Softmax { d: 1.0 }),
    ] {
        let params = ModelParams::new(0.6, 0.9, sel);
        g.bench_function(format!("step_user_{name}"), |b| {
            b.iter_batched(
                || {
                    let mut s = UrnState::new(params.clone(), 1).unwrap();
                    for _ in 0..2000 {
                        s.step_user();
                    }
                    s
                },
                |mut s| {
                    for _ in 0..100 {
                        black_box(s.step_user());
                    }
                },
                BatchSize::LargeInput,
            )
        });
        g.bench_function(format!("simulate_4000_{name}"), |b| {
            b.iter(|| black_box(simulate(&params, 4000, 10, 3).unwrap().snapshots.len()))
        });
    }
    g.finish();
}

fn ingest(c: &mut Criterion) {
    let records = corpus(20_000);
    let xml = dump(&records);
    let mut canonical = Vec::new();
    write_canonical(&records, &mut canonical).unwrap();
    let mut g = c.benchmark_group("ingest");
    g.throughput(Throughput::Bytes(xml.len() as u64));
    g.bench_function("parse_posts", |b| {
        b.iter(|| black_box(PostsParser::new(Cursor::new(xml.as_bytes())).count()))
    });
    g.throughput(Throughput::Bytes(canonical.len() as u64));
    g.bench_function("read_canonical", |b| {
        b.iter(|| black_box(read_canonical(Cursor::new(&canonical)).count()))
    });
    g.finish();
}

fn trajectory(c: &mut Criterion) {
    let records = corpus(20_000);
    let mut g = c.benchmark_group("analyzer");
    g.throughput(Throughput::Elements(records.len() as u64));
    g.bench_function("monthly_trajectory", |b| {
        b.iter(|| black_box(monthly_trajectory(&records).unwrap().len()))
    });
    g.finish();
}

criterion_group!(benches, tables, simulator, ingest, trajectory);
criterion_main!(benches);
