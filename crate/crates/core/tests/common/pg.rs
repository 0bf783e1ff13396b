//! Checks against a live PostgreSQL server, shared by the integration tests
//! and the acceptance suite. Each check panics on failure.



use std::fs;
use std::time::Duration;

use qobench::adapters::AdapterDescriptor;
use qobench::dbms::{self, ConfigParam, ConfigProfile, ConnectOptions, GeqoPolicy, PgClient, Session, SqlClient, DSN_ENV};
use qobench::measurement::{Pick, TimingPolicy};
use qobench::runner::{gen_covariate_script, run_ablation, run_benchmark, AblationConfig, ForeignKey, RunOptions, Toggle};
use qobench::splitter::{sample_split, SplitMethod};
use qobench::workload::{Query, Workload};

/// The connection descriptor, or `None` when no server is configured.
pub fn dsn() -> Option<String> {
    std::env::var(DSN_ENV).ok().filter(|d| !d.is_empty())
}

fn client(dsn: &str) -> PgClient {
    PgClient::connect(dsn).expect("connect")
}

fn scalar(c: &mut PgClient, sql: &str) -> String {
    c.query(sql).unwrap()[0][0].clone().unwrap()
}

pub fn create_schema(c: &mut PgClient, prefix: &str) {
    c.execute(&format!(
        "DROP TABLE IF EXISTS {p}_c, {p}_b, {p}_a;
         CREATE TABLE {p}_a (id int PRIMARY KEY, v int);
         CREATE TABLE {p}_b (id int PRIMARY KEY, a_id int, v int);
         CREATE TABLE {p}_c (id int PRIMARY KEY, b_id int, v int);
         INSERT INTO {p}_a SELECT g, g % 10 FROM generate_series(1, 1000) g;
         INSERT INTO {p}_b SELECT g, 1 + g % 1000, g % 7 FROM generate_series(1, 1000) g;
         INSERT INTO {p}_c SELECT g, 1 + g % 1000, g % 3 FROM generate_series(1, 1000) g;
         ANALYZE {p}_a, {p}_b, {p}_c;",
        p = prefix
    ))
    .unwrap();
}

pub fn mini_workload(p: &str) -> Workload {
    let sql = [
        ("1a", format!("SELECT count(*) FROM {p}_a a, {p}_b b WHERE a.id = b.a_id")),
        ("1b", format!("SELECT count(*) FROM {p}_a a, {p}_b b WHERE a.id = b.a_id AND a.v = 3")),
        ("2a", format!("SELECT count(*) FROM {p}_a a, {p}_b b, {p}_c c WHERE a.id = b.a_id AND b.id = c.b_id")),
        ("2b", format!("SELECT count(*) FROM {p}_a a, {p}_b b, {p}_c c WHERE a.id = b.a_id AND b.id = c.b_id AND c.v = 1")),
        ("2c", format!("SELECT max(c.v) FROM {p}_a a, {p}_b b, {p}_c c WHERE a.id = b.a_id AND b.id = c.b_id AND a.v < 5")),
    ];
    let queries = sql
        .into_iter()
        .map(|(id, q)| Query::new(id.parse().unwrap(), format!("{q};"), "inline").unwrap())
        .collect();
    Workload::new("mini", queries).unwrap()
}

pub fn verification_reports_the_one_wrong_parameter(dsn: &str) {
    let mut c = client(dsn);
    let shared = scalar(&mut c, "SHOW shared_buffers");
    let connections: u64 = scalar(&mut c, "SHOW max_connections").parse().unwrap();
    let params = vec![
        ConfigParam::new("work_mem", "64MB").unwrap(),
        ConfigParam::new("shared_buffers", &shared).unwrap(),
        ConfigParam::new("max_connections", &(connections + 1).to_string()).unwrap(),
    ];
    let profile = ConfigProfile::new("probe", params, GeqoPolicy::AlwaysOn).unwrap();
    let options = ConnectOptions {
        allow_mismatch: true,
        ..ConnectOptions::default()
    };
    let session = Session::open(c, &profile, &options).unwrap();
    let names: Vec<&str> = session.last_verification().iter().map(|m| m.name.as_str()).collect();
    assert_eq!(names, vec!["max_connections"]);
    let strict = Session::open(client(dsn), &profile, &ConnectOptions::default());
    assert!(matches!(strict, Err(dbms::DbmsError::ConfigMismatch(_))));
}

pub fn native_and_forced_runs_measure_every_query(dsn: &str) {
    let mut c = client(dsn);
    create_schema(&mut c, "qobench_run");
    let workload = mini_workload("qobench_run");
    let split = sample_split(&workload, SplitMethod::LeaveOneOut, 1).unwrap();
    let hints = tempfile::tempdir().unwrap();
    for q in workload.queries() {
        let text = if q.id.family() == "1" {
            "/*+ Leading((a b)) HashJoin(a b) SeqScan(a) SeqScan(b) */"
        } else {
            "/*+ Leading(((a b) c)) HashJoin(a b) HashJoin(a b c) SeqScan(a) SeqScan(b) SeqScan(c) */"
        };
        fs::write(hints.path().join(format!("{}.hints", q.id)), text).unwrap();
    }
    let with_extension = ConnectOptions {
        load: vec!["pg_hint_plan".into()],
        ..ConnectOptions::default()
    };
    let profile = ConfigProfile::empty();
    let mut session = match Session::open(c, &profile, &with_extension) {
        Ok(s) => s,
        Err(e) => {
            println!("note: hint extension unavailable ({e}); hints become comments");
            Session::open(client(dsn), &profile, &ConnectOptions::default()).unwrap()
        }
    };
    let options = RunOptions {
        policy: TimingPolicy {
            k: 3,
            pick: Pick::Kth,
            timeout_ms: 60_000,
        },
        adapter_timeout: Duration::from_secs(30),
    };
    let adapters = [AdapterDescriptor::native(), AdapterDescriptor::file_hints("forced", hints.path())];
    let reports = run_benchmark(&mut session, &workload, &split, &adapters, &profile, &options).unwrap();
    assert_eq!(reports.len(), 2);
    for r in &reports {
        assert_eq!(r.records.len(), 5);
        for rec in &r.records {
            assert!(rec.timing.is_ok(), "{}: {:?}", rec.timing.query_id, rec.timing.error);
            assert_eq!(rec.timing.repetitions.len(), 3);
            let sum = rec.timing.inference_ms + rec.timing.planning_ms + rec.timing.execution_ms;
            assert!((rec.timing.end_to_end_ms - sum).abs() < 1e-9);
            assert!(rec.timing.explain.is_some());
        }
    }
    session.client_mut().execute("DROP TABLE qobench_run_c, qobench_run_b, qobench_run_a").unwrap();
}

pub fn covariate_script_keeps_about_the_fraction(dsn: &str) {
    let mut c = client(dsn);
    create_schema(&mut c, "qobench_cov");
    let fks = vec!["qobench_cov_b.a_id".parse::<ForeignKey>().unwrap()];
    let script = gen_covariate_script("qobench_cov_a", "id", 0.5, 0.42, &fks).unwrap();
    c.execute(&script).unwrap();
    let kept: i64 = scalar(&mut c, "SELECT count(*) FROM qobench_cov_a").parse().unwrap();
    assert!((450..=550).contains(&kept), "kept {kept}");
    let orphans: i64 = scalar(
        &mut c,
        "SELECT count(*) FROM qobench_cov_b b WHERE NOT EXISTS (SELECT 1 FROM qobench_cov_a a WHERE a.id = b.a_id)",
    )
    .parse()
    .unwrap();
    assert_eq!(orphans, 0);
    c.execute("DROP TABLE qobench_cov_c, qobench_cov_b, qobench_cov_a").unwrap();
}

pub fn ablation_changes_exactly_the_toggled_settings(dsn: &str) {
    let mut c = client(dsn);
    create_schema(&mut c, "qobench_abl");
    let workload = mini_workload("qobench_abl");
    let profile = ConfigProfile::empty();
    let mut session = Session::open(c, &profile, &ConnectOptions::default()).unwrap();
    let before_bitmap = session.show("enable_bitmapscan").unwrap();
    let config = AblationConfig {
        repeats_per_arm: 3,
        ..AblationConfig::default()
    };
    let report = run_ablation(&mut session, &workload, Toggle::ScansOff, &profile, &TimingPolicy::default(), &config).unwrap();
    let names: Vec<&str> = report.settings_diff.iter().map(|(n, _, _)| n.as_str()).collect();
    assert_eq!(names, vec!["enable_bitmapscan", "enable_tidscan"]);
    assert!(report.settings_diff.iter().all(|(_, _, t)| t == "off"));
    assert_eq!(report.rows.len(), 5);
    assert_eq!(session.show("enable_bitmapscan").unwrap(), before_bitmap);
    session.client_mut().execute("DROP TABLE qobench_abl_c, qobench_abl_b, qobench_abl_a").unwrap();
}
