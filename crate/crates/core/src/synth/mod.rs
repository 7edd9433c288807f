//! A desk-scale synthetic corpus with known structure.
//!
//! Several projects of small Java files, bug reports spread over a few
//! years, and six synthetic baseline tools. Each tool localizes exactly one
//! cluster of bugs at Top1 (plus a shared cluster that every tool gets
//! right); one further cluster defeats every tool. Within a tool cluster the
//! link between a report and its fixed file is planted in a single grid
//! cell: the report's signal words occur in one report channel and in one
//! source channel of the fixed file only. The shared cluster plants three
//! tool cells at once, each with its own words.
//!
//! Every report also carries decoy words, repeated, in a plain text field
//! without signal. Decoy files hold the decoy words in the planted source
//! channel and call methods named after the signal words. The whole-report
//! row, the raw-source column and the invocation columns therefore favor a
//! decoy for every bug, while cells pairing an unplanted report channel
//! with an unplanted source channel carry nothing.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{export_line, write_history, BugReport, CommitRef, HistoryCommit, ProjectSnapshot, Status};
use crate::regions::{write_tool_results, ToolResult};
use crate::textprep::{bundled_dictionary_words, Lexicon};

/// Tool name and the (report channel, source channel) cell of its cluster.
pub const TOOL_CELLS: [(&str, &str, &str); 6] = [
    ("amber", "summary", "documentation"),
    ("birch", "summaryHints", "className"),
    ("cedar", "stackTraces", "methodNames"),
    ("dune", "descriptionHints", "formalParameter"),
    ("elm", "description", "commitLogs"),
    ("fjord", "codeElements", "hunks"),
];

/// Cell of the cluster no tool localizes.
pub const HARD_CELL: (&str, &str) = ("summaryHints", "methodNames");

/// Tools whose cells also carry the signal of the shared cluster.
pub const INTER_TOOLS: [&str; 3] = ["amber", "cedar", "dune"];

pub const INTER_CLUSTER: &str = "inter";
pub const HARD_CLUSTER: &str = "hard";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub projects: usize,
    pub files_per_project: usize,
    pub bugs_per_tool_cluster: usize,
    pub inter_bugs: usize,
    pub hard_bugs: usize,
    pub decoys_per_bug: usize,
    pub first_year: i32,
    /// Bugs are spread from January of `first_year` to late in
    /// `cutoff_year`; the last two of every cluster fall in `cutoff_year`.
    pub cutoff_year: i32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            projects: 3,
            files_per_project: 100,
            bugs_per_tool_cluster: 7,
            inter_bugs: 9,
            hard_bugs: 9,
            decoys_per_bug: 3,
            first_year: 2010,
            cutoff_year: 2013,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub name: String,
    /// The tool that alone localizes this cluster.
    pub tool: Option<String>,
    /// Planted cell, `None` for the shared cluster.
    pub cell: Option<(String, String)>,
    pub bugs: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct DeskCorpus {
    pub config: SynthConfig,
    pub snapshots: Vec<ProjectSnapshot>,
    /// Includes two reports that curation or the pre-fix filter removes.
    pub reports: Vec<BugReport>,
    pub tool_results: Vec<ToolResult>,
    pub clusters: Vec<Cluster>,
}

struct Vocab {
    words: Vec<String>,
    next: usize,
}

impl Vocab {
    fn build(rng: &mut ChaCha8Rng, reserved: &[&str]) -> Self {
        let lexicon = Lexicon::bundled();
        let mut stems: HashSet<String> = reserved.iter().filter_map(|w| lexicon.normalize(w)).collect();
        let mut candidates: Vec<&str> = bundled_dictionary_words()
            .filter(|w| (5..=8).contains(&w.len()) && w.bytes().all(|b| b.is_ascii_lowercase()))
            .collect();
        candidates.shuffle(rng);
        let mut words = Vec::new();
        for w in candidates {
            let Some(stem) = lexicon.normalize(w) else { continue };
            if stem.len() >= 4 && lexicon.is_known_word(w) && stems.insert(stem) {
                words.push(w.to_string());
            }
            if words.len() >= 4000 {
                break;
            }
        }
        Vocab { words, next: 0 }
    }

    fn take(&mut self, n: usize) -> Vec<String> {
        assert!(self.next + n <= self.words.len(), "synthetic vocabulary exhausted");
        let out = self.words[self.next..self.next + n].to_vec();
        self.next += n;
        out
    }

}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next().map(|f| f.to_ascii_uppercase().to_string() + c.as_str()).unwrap_or_default()
}

fn camel(words: &[String]) -> String {
    words.iter().map(|w| capitalize(w)).collect()
}

fn lower_camel(words: &[String]) -> String {
    let mut s = words[0].clone();
    s.push_str(&camel(&words[1..]));
    s
}

#[derive(Debug, Clone)]
struct Method {
    name: Vec<String>,
    params: Vec<Vec<String>>,
    calls: Vec<(Vec<String>, Vec<String>)>,
}

#[derive(Debug, Clone)]
struct FileSpec {
    module: Option<String>,
    class_words: Vec<String>,
    doc: Vec<String>,
    methods: Vec<Method>,
    history: Vec<HistoryCommit>,
}

impl FileSpec {
    fn path(&self, project: &str) -> String {
        match &self.module {
            Some(m) => format!("src/main/java/org/{project}/{m}/{}.java", camel(&self.class_words)),
            None => format!("src/main/java/org/{project}/{}.java", camel(&self.class_words)),
        }
    }

    fn render(&self, project: &str) -> String {
        let package = match &self.module {
            Some(m) => format!("org.{project}.{m}"),
            None => format!("org.{project}"),
        };
        let mut out = format!("package {package};\n\n/**\n * {}\n */\npublic class {} {{\n", self.doc.join(" "), camel(&self.class_words));
        for m in &self.methods {
            let params: Vec<String> = m.params.iter().map(|p| format!("String {}", lower_camel(p))).collect();
            out.push_str(&format!("\n    public void {}({}) {{\n", lower_camel(&m.name), params.join(", ")));
            for (recv, call) in &m.calls {
                out.push_str(&format!("        {}.{}();\n", lower_camel(recv), lower_camel(call)));
            }
            out.push_str("    }\n");
        }
        out.push_str("}\n");
        out
    }
}

/// Where a planted word set goes in a source file.
fn plant(file: &mut FileSpec, channel: &str, words: &[String], when: DateTime<Utc>, tag: &str) {
    let words = words.to_vec();
    match channel {
        "documentation" => file.doc.extend(words),
        "className" => file.class_words = words,
        "methodNames" => file.methods.push(Method { name: words, params: vec![], calls: vec![] }),
        "formalParameter" => {
            let name = file.methods[0].name.clone();
            file.methods.push(Method { name, params: vec![words], calls: vec![] })
        }
        "hunks" => file.history.push(HistoryCommit {
            hash: format!("{tag}h"),
            committer_email: "maintainer@example.org".into(),
            timestamp: when,
            log: "Update".into(),
            hunks: vec![format!("@@ -1,1 +1,2 @@\n+        {}();", lower_camel(&words))],
        }),
        "commitLogs" => file.history.push(HistoryCommit {
            hash: format!("{tag}l"),
            committer_email: "maintainer@example.org".into(),
            timestamp: when,
            log: words.join(" "),
            hunks: vec![],
        }),
        other => panic!("no planting rule for {other}"),
    }
}

/// Signal words in the decoy's method calls, which puts them in the
/// invocation channels and in the raw source more often than in the fixed
/// file.
fn plant_mentions(file: &mut FileSpec, signal: &[String], times: usize) {
    for _ in 0..times {
        file.methods[0].calls.push((signal.to_vec(), signal.to_vec()));
    }
}

fn repeat(words: &[String], times: usize) -> String {
    vec![words.join(" "); times].join(" ")
}

fn trace(project: &str, method: &str, filler: &[String]) -> String {
    let class = camel(&filler[..2]);
    format!(
        "java.lang.IllegalStateException: {}\n\tat org.{project}.core.{class}.{method}({class}.java:41)\n\tat org.{project}.core.{class}.{}({class}.java:17)\n",
        filler[2],
        lower_camel(&filler[3..5]),
    )
}

/// How often decoy words repeat in a plain text field.
const DECOY_REPEAT: usize = 4;

/// Summary and description of a report whose signal words sit in the
/// given report channels. Decoy words fill the plain fields that carry no
/// signal of their own, so they dominate the whole-report bag.
fn report_text(project: &str, planted: &[(&str, &[String])], d: &[String], f: &[String]) -> (String, String) {
    let rows: Vec<&str> = planted.iter().map(|(b, _)| *b).collect();
    let mut summary = Vec::new();
    let mut prose = vec![f[1].clone()];
    let mut traces = String::new();
    let mut code = String::new();
    for (row, s) in planted {
        match *row {
            "summary" => summary.push(s.join(" ")),
            "summaryHints" => summary.push(camel(s)),
            "description" => prose.push(s.join(" ")),
            "descriptionHints" => prose.push(lower_camel(s)),
            "stackTraces" => traces.push_str(&trace(project, &lower_camel(s), &f[4..])),
            "codeElements" => code.push_str(&format!("```\n{}();\n```\n", lower_camel(s))),
            other => panic!("no report template for {other}"),
        }
    }
    if !rows.contains(&"summary") {
        summary.push(repeat(d, DECOY_REPEAT));
    }
    summary.push(f[0].clone());
    if !rows.contains(&"description") {
        prose.push(repeat(d, DECOY_REPEAT));
        if !rows.contains(&"descriptionHints") {
            prose.extend(std::iter::repeat_n(lower_camel(d), 3));
        }
    }
    prose.push(f[2].clone());
    (summary.join(" "), format!("{}.\n{traces}{code}", prose.join(" ")))
}

/// Cluster label, tool and planted cell of one cluster slot.
struct ClusterPlan {
    name: String,
    tool: Option<&'static str>,
    cells: Vec<(&'static str, &'static str)>,
    size: usize,
}

impl DeskCorpus {
    pub fn generate(config: &SynthConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let reserved = [
            "java", "lang", "illegal", "state", "exception", "string", "public", "package", "class", "update", "main",
            "source", "core", "initial", "import", "maintainer", "example",
        ];
        let mut vocab = Vocab::build(&mut rng, &reserved);
        let fillers = vocab.take(40);

        let project_names: Vec<String> = vocab.take(config.projects);
        let mut files: Vec<Vec<FileSpec>> = Vec::new();
        for _ in 0..config.projects {
            let pool = vocab.take(120);
            let modules: Vec<String> = pool[..5].to_vec();
            let pick = |rng: &mut ChaCha8Rng, n: usize| -> Vec<String> {
                (0..n).map(|_| pool[rng.gen_range(5..pool.len())].clone()).collect()
            };
            let mut specs = vec![FileSpec {
                module: None,
                class_words: vec!["app".into()],
                doc: pick(&mut rng, 4),
                methods: vec![Method { name: pick(&mut rng, 2), params: vec![pick(&mut rng, 1)], calls: vec![] }],
                history: vec![],
            }];
            for k in 1..config.files_per_project {
                let mut class_words = pick(&mut rng, 2);
                class_words.push(format!("v{k}"));
                specs.push(FileSpec {
                    module: Some(modules[k % modules.len()].clone()),
                    class_words,
                    doc: pick(&mut rng, 4),
                    methods: (0..2)
                        .map(|_| Method {
                            name: pick(&mut rng, 2),
                            params: vec![pick(&mut rng, 1)],
                            calls: vec![(pick(&mut rng, 1), pick(&mut rng, 1))],
                        })
                        .collect(),
                    history: vec![],
                });
            }
            files.push(specs);
        }

        let mut plans: Vec<ClusterPlan> = TOOL_CELLS
            .iter()
            .map(|(tool, b, c)| ClusterPlan {
                name: format!("only-{tool}"),
                tool: Some(tool),
                cells: vec![(*b, *c)],
                size: config.bugs_per_tool_cluster,
            })
            .collect();
        let inter_cells = TOOL_CELLS.iter().filter(|(t, _, _)| INTER_TOOLS.contains(t)).map(|(_, b, c)| (*b, *c)).collect();
        plans.push(ClusterPlan { name: INTER_CLUSTER.into(), tool: None, cells: inter_cells, size: config.inter_bugs });
        plans.push(ClusterPlan { name: HARD_CLUSTER.into(), tool: None, cells: vec![HARD_CELL], size: config.hard_bugs });

        let start = Utc.with_ymd_and_hms(config.first_year, 1, 10, 9, 0, 0).unwrap();
        let end = Utc.with_ymd_and_hms(config.cutoff_year, 11, 20, 9, 0, 0).unwrap();
        let span = (end - start).num_seconds();

        let mut used: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); config.projects];
        let mut reports = Vec::new();
        let mut clusters = Vec::new();
        let mut decoys_of: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut counter = vec![0usize; config.projects];
        let mut round_robin = 0usize;

        for plan in &plans {
            let mut bugs = BTreeSet::new();
            for i in 0..plan.size {
                let p = round_robin % config.projects;
                round_robin += 1;
                let project = &project_names[p];
                counter[p] += 1;
                let bug_id = format!("{}-{}", project.to_uppercase(), counter[p]);
                let t = if plan.size > 1 { i as f64 / (plan.size - 1) as f64 } else { 1.0 };
                let jitter = rng.gen_range(0..86_400 * 5);
                let created_at = start + Duration::seconds((t * span as f64) as i64 - jitter);

                let n_fixed = if i % 5 == 3 { 2 } else { 1 };
                let free: Vec<usize> = (1..config.files_per_project).filter(|k| !used[p].contains(k)).collect();
                let chosen: Vec<usize> = free.choose_multiple(&mut rng, n_fixed + config.decoys_per_bug).copied().collect();
                used[p].extend(chosen.iter().copied());
                let (fixed_idx, decoy_idx) = chosen.split_at(n_fixed);

                let signals: Vec<Vec<String>> = plan.cells.iter().map(|_| vocab.take(3)).collect();
                let decoy = vocab.take(3);
                let mut f = fillers.clone();
                f.shuffle(&mut rng);
                let history_time = created_at - Duration::days(30);
                let tag = bug_id.to_lowercase();

                for ((_, code_channel), signal) in plan.cells.iter().zip(&signals) {
                    for &k in fixed_idx {
                        let mut words = signal.clone();
                        if *code_channel == "className" && fixed_idx.len() > 1 {
                            words.push(format!("v{k}"));
                        }
                        plant(&mut files[p][k], code_channel, &words, history_time, &tag);
                        plant_mentions(&mut files[p][k], signal, 1);
                    }
                    for &k in decoy_idx {
                        let mut words = decoy.clone();
                        if *code_channel == "className" {
                            words.push(format!("v{k}"));
                        }
                        plant(&mut files[p][k], code_channel, &words, history_time, &tag);
                        plant_mentions(&mut files[p][k], signal, 2);
                    }
                }
                let planted: Vec<(&str, &[String])> =
                    plan.cells.iter().zip(&signals).map(|((b, _), s)| (*b, s.as_slice())).collect();
                let (summary, description) = report_text(project, &planted, &decoy, &f);

                let fixed_paths: BTreeSet<String> = fixed_idx.iter().map(|&k| files[p][k].path(project)).collect();
                decoys_of.insert(bug_id.clone(), decoy_idx.iter().map(|&k| files[p][k].path(project)).collect());
                let fix_time = created_at + Duration::days(3);
                reports.push(BugReport {
                    id: bug_id.clone(),
                    project: project.clone(),
                    summary,
                    description,
                    created_at,
                    status: [Status::Resolved, Status::Fixed, Status::Closed][i % 3],
                    reporter_email: format!("user{}@example.com", reports.len() % 11),
                    comments: vec![],
                    attachments: vec![],
                    fix_commits: vec![CommitRef {
                        hash: format!("{tag}fix"),
                        committer_email: format!("dev{}@{project}.org", i % 4),
                        timestamp: fix_time,
                        touched_files: fixed_paths.clone(),
                    }],
                    fixed_files: fixed_paths,
                });
                bugs.insert(bug_id);
            }
            clusters.push(Cluster {
                name: plan.name.clone(),
                tool: plan.tool.map(str::to_string),
                cell: match plan.cells.as_slice() {
                    [(b, c)] => Some((b.to_string(), c.to_string())),
                    _ => None,
                },
                bugs,
            });
        }

        // One report curation drops and one the pre-fix filter drops.
        let mut open = reports[0].clone();
        open.id = format!("{}-{}", project_names[0].to_uppercase(), 900);
        open.status = Status::Other;
        let mut postfix = reports[1].clone();
        postfix.id = format!("{}-{}", project_names[0].to_uppercase(), 901);
        postfix.reporter_email = postfix.fix_commits[0].committer_email.clone();
        reports.push(open);
        reports.push(postfix);

        let snapshots: Vec<ProjectSnapshot> = project_names
            .iter()
            .zip(&files)
            .map(|(name, specs)| {
                let mut history = BTreeMap::new();
                let mut snapshot_files = BTreeMap::new();
                for spec in specs {
                    let path = spec.path(name);
                    let mut commits = vec![HistoryCommit {
                        hash: format!("init-{}", path.len()),
                        committer_email: "maintainer@example.org".into(),
                        timestamp: start - Duration::days(400),
                        log: "Initial import".into(),
                        hunks: vec![],
                    }];
                    commits.extend(spec.history.iter().cloned());
                    history.insert(path.clone(), commits);
                    snapshot_files.insert(path, spec.render(name));
                }
                ProjectSnapshot { project: name.clone(), files: snapshot_files, history }
            })
            .collect();

        let tool_results = Self::tool_results(&mut rng, &reports, &snapshots, &clusters, &decoys_of);
        DeskCorpus { config: config.clone(), snapshots, reports, tool_results, clusters }
    }

    fn tool_results(
        rng: &mut ChaCha8Rng,
        reports: &[BugReport],
        snapshots: &[ProjectSnapshot],
        clusters: &[Cluster],
        decoys_of: &BTreeMap<String, Vec<String>>,
    ) -> Vec<ToolResult> {
        let inter = &clusters.iter().find(|c| c.name == INTER_CLUSTER).unwrap().bugs;
        let mut out = Vec::new();
        for (tool, _, _) in TOOL_CELLS {
            let own = &clusters.iter().find(|c| c.tool.as_deref() == Some(tool)).unwrap().bugs;
            for r in reports {
                let snapshot = snapshots.iter().find(|s| s.project == r.project).unwrap();
                let fixed: Vec<String> = r.fixed_files.iter().cloned().collect();
                let mut others: Vec<String> =
                    snapshot.files.keys().filter(|p| !r.fixed_files.contains(*p)).cloned().collect();
                others.shuffle(rng);
                let mut ranked: Vec<String> = Vec::new();
                if own.contains(&r.id) || inter.contains(&r.id) {
                    ranked.extend(fixed);
                    ranked.extend(others.into_iter().take(10 - ranked.len()));
                } else {
                    let lead = decoys_of
                        .get(&r.id)
                        .and_then(|d| d.first().cloned())
                        .unwrap_or_else(|| others[0].clone());
                    ranked.push(lead.clone());
                    ranked.extend(others.into_iter().filter(|p| *p != lead).take(9));
                    if rng.gen_bool(0.6) {
                        let at = rng.gen_range(1..ranked.len());
                        ranked[at] = fixed[0].clone();
                    }
                }
                out.push(ToolResult { tool: tool.to_string(), bug_id: r.id.clone(), ranked_files: ranked });
            }
        }
        out
    }

    pub fn cluster(&self, name: &str) -> Option<&Cluster> {
        self.clusters.iter().find(|c| c.name == name)
    }

    /// Writes the corpus in the on-disk formats the command line reads:
    ///
    /// ```text
    /// bugs.jsonl
    /// tool_results.csv
    /// clusters.csv
    /// projects/<name>/manifest.txt, history.txt and the source tree
    /// ```
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut bugs = std::fs::File::create(dir.join("bugs.jsonl"))?;
        for r in &self.reports {
            writeln!(bugs, "{}", export_line(r))?;
        }
        let results = std::fs::File::create(dir.join("tool_results.csv"))?;
        write_tool_results(results, &self.tool_results).map_err(std::io::Error::other)?;
        let mut clusters = String::from("bug_id,cluster,tool,bug_channel,code_channel\n");
        for c in &self.clusters {
            let (b, s) = c.cell.clone().unwrap_or_default();
            for bug in &c.bugs {
                clusters.push_str(&format!("{bug},{},{},{b},{s}\n", c.name, c.tool.clone().unwrap_or_default()));
            }
        }
        std::fs::write(dir.join("clusters.csv"), clusters)?;
        for s in &self.snapshots {
            let root = dir.join("projects").join(&s.project);
            let mut manifest = String::new();
            for (path, text) in &s.files {
                let full = root.join(path);
                std::fs::create_dir_all(full.parent().unwrap())?;
                std::fs::write(full, text)?;
                manifest.push_str(path);
                manifest.push('\n');
            }
            std::fs::write(root.join("manifest.txt"), manifest)?;
            std::fs::write(root.join("history.txt"), write_history(&s.history))?;
        }
        Ok(())
    }
}
