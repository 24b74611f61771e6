#![allow(dead_code)]

use splitplace::engine::{Engine, FragmentGraph, GraphNode, Variant};
use splitplace::model::{Fragment, Host, Workload};

pub fn host(id: usize, mips: f64) -> Host {
    Host {
        id,
        capacity_mips: mips,
        ram_mb: 8192.0,
        power_idle_w: 1.0,
        power_max_w: 2.0,
        bandwidth_mbps: 10.0,
        latency_base_s: 0.0,
        latency_jitter_std_s: 0.0,
    }
}

pub fn frag(mi: f64, out: f64) -> Fragment {
    Fragment::new(mi, 100.0, out)
}

pub fn node(f: Fragment, preds: &[usize]) -> GraphNode {
    GraphNode {
        fragment: f,
        preds: preds.to_vec(),
        branch: None,
    }
}

pub fn chain(frags: &[Fragment]) -> FragmentGraph {
    FragmentGraph {
        nodes: frags
            .iter()
            .enumerate()
            .map(|(i, &f)| GraphNode {
                fragment: f,
                preds: if i == 0 { vec![] } else { vec![i - 1] },
                branch: None,
            })
            .collect(),
    }
}

pub fn workload(id: u64, arrival: f64) -> Workload {
    Workload {
        id,
        arrival_s: arrival,
        app: "x".into(),
        sla_s: 1000.0,
    }
}

/// A workload injected into the engine at `at_s` (must be a multiple of the step).
pub struct Job {
    pub at_s: f64,
    pub graph: FragmentGraph,
    pub hosts: Vec<usize>,
    /// Hand-traced completion time.
    pub expect_s: f64,
}

pub struct Scenario {
    pub name: &'static str,
    pub hosts: Vec<Host>,
    pub step_s: f64,
    pub jobs: Vec<Job>,
}

impl Scenario {
    /// Runs the engine and returns (expected, actual) completion per job.
    pub fn run(&self) -> Vec<(f64, f64)> {
        let mut e = Engine::new(self.hosts.clone(), 0);
        let horizon = self.jobs.iter().map(|j| j.expect_s).fold(0.0, f64::max) + 2.0;
        let mut completions = vec![f64::NAN; self.jobs.len()];
        let mut k = 0u64;
        loop {
            let now = k as f64 * self.step_s;
            for (i, j) in self.jobs.iter().enumerate() {
                if (j.at_s - now).abs() < 1e-9 {
                    e.dispatch(
                        workload(i as u64, j.at_s),
                        Variant::Layer,
                        1.0,
                        &j.graph,
                        &j.hosts,
                    )
                    .expect("scenario placement is feasible");
                }
            }
            e.step(self.step_s);
            k += 1;
            for r in e.drain_finished() {
                completions[r.workload.id as usize] = r.completion_s.unwrap();
            }
            if now > horizon {
                break;
            }
        }
        self.jobs
            .iter()
            .map(|j| j.expect_s)
            .zip(completions)
            .collect()
    }
}

fn hosts(mips: &[f64]) -> Vec<Host> {
    mips.iter().enumerate().map(|(i, &m)| host(i, m)).collect()
}

fn job(at_s: f64, graph: FragmentGraph, hosts: &[usize], expect_s: f64) -> Job {
    Job {
        at_s,
        graph,
        hosts: hosts.to_vec(),
        expect_s,
    }
}

/// Small scenarios whose completion times are traced by hand with the fluid
/// processor-sharing rule (equal shares, recomputed at every exit) and the
/// max-plus rule for joins (a node starts when its last input arrives).
pub fn oracle_scenarios() -> Vec<Scenario> {
    let mut s = Vec::new();

    // 2000 MI at 1000 MIPS.
    s.push(Scenario {
        name: "single fragment",
        hosts: hosts(&[1000.0]),
        step_s: 1.0,
        jobs: vec![job(0.0, chain(&[frag(2000.0, 0.0)]), &[0], 2.0)],
    });

    // Shares of 500 until A exits at 2.0 (1000 MI each); B then has 2000 left at 1000.
    s.push(Scenario {
        name: "two-way sharing",
        hosts: hosts(&[1000.0]),
        step_s: 1.0,
        jobs: vec![
            job(0.0, chain(&[frag(1000.0, 0.0)]), &[0], 2.0),
            job(0.0, chain(&[frag(3000.0, 0.0)]), &[0], 4.0),
        ],
    });

    // Same as above but with a step that does not divide the event times.
    s.push(Scenario {
        name: "two-way sharing, step 0.3",
        hosts: hosts(&[1000.0]),
        step_s: 0.3,
        jobs: vec![
            job(0.0, chain(&[frag(1000.0, 0.0)]), &[0], 2.0),
            job(0.0, chain(&[frag(3000.0, 0.0)]), &[0], 4.0),
        ],
    });

    // Three equal shares of 333.3 MIPS for 1000 MI each.
    s.push(Scenario {
        name: "three equal",
        hosts: hosts(&[1000.0]),
        step_s: 1.0,
        jobs: (0..3)
            .map(|_| job(0.0, chain(&[frag(1000.0, 0.0)]), &[0], 3.0))
            .collect(),
    });

    // 1000/2000/3000: first exit at 3.0; then 1000 and 2000 left at 500 each,
    // second exit at 5.0; last 1000 at full rate to 6.0.
    s.push(Scenario {
        name: "three staggered sizes",
        hosts: hosts(&[1000.0]),
        step_s: 1.0,
        jobs: vec![
            job(0.0, chain(&[frag(1000.0, 0.0)]), &[0], 3.0),
            job(0.0, chain(&[frag(2000.0, 0.0)]), &[0], 5.0),
            job(0.0, chain(&[frag(3000.0, 0.0)]), &[0], 6.0),
        ],
    });

    s.push(Scenario {
        name: "independent hosts",
        hosts: hosts(&[1000.0, 2000.0]),
        step_s: 1.0,
        jobs: vec![
            job(0.0, chain(&[frag(1000.0, 0.0)]), &[0], 1.0),
            job(0.0, chain(&[frag(1000.0, 0.0)]), &[1], 0.5),
        ],
    });

    // Intra-host hand-off is free: 1 + 1.
    s.push(Scenario {
        name: "local layer chain",
        hosts: hosts(&[1000.0]),
        step_s: 1.0,
        jobs: vec![job(
            0.0,
            chain(&[frag(1000.0, 5.0), frag(1000.0, 0.0)]),
            &[0, 0],
            2.0,
        )],
    });

    // 1.0 compute + 5 MB / 10 MB/s + 0.1 latency + 1.0 compute.
    s.push({
        let mut h = hosts(&[1000.0, 1000.0]);
        h[0].latency_base_s = 0.1;
        h[1].latency_base_s = 0.1;
        Scenario {
            name: "remote layer chain",
            hosts: h,
            step_s: 1.0,
            jobs: vec![job(
                0.0,
                chain(&[frag(1000.0, 5.0), frag(1000.0, 0.0)]),
                &[0, 1],
                2.6,
            )],
        }
    });

    // 1.0 + 0.2 + 1.0 + 0.1 + 1.0.
    s.push(Scenario {
        name: "three-host chain",
        hosts: hosts(&[1000.0, 2000.0, 500.0]),
        step_s: 1.0,
        jobs: vec![job(
            0.0,
            chain(&[frag(1000.0, 2.0), frag(2000.0, 1.0), frag(500.0, 0.0)]),
            &[0, 1, 2],
            3.3,
        )],
    });

    // Branches end at 2.0 and 3.0; aggregation 100 MI at 1000 MIPS after the later one.
    s.push(Scenario {
        name: "semantic max-plus",
        hosts: hosts(&[1000.0, 1000.0]),
        step_s: 1.0,
        jobs: vec![job(
            0.0,
            FragmentGraph {
                nodes: vec![
                    node(frag(2000.0, 0.0), &[]),
                    node(frag(3000.0, 0.0), &[]),
                    node(frag(100.0, 0.0), &[0, 1]),
                ],
            },
            &[0, 1, 0],
            3.1,
        )],
    });

    // Local branch ready at 1.0; remote ones at 1.0 + 0.1 + 0.05; aggregation 0.15.
    s.push({
        let mut h = hosts(&[1000.0, 1000.0, 1000.0]);
        for x in &mut h {
            x.latency_base_s = 0.05;
        }
        Scenario {
            name: "three-branch fan-in",
            hosts: h,
            step_s: 1.0,
            jobs: vec![job(
                0.0,
                FragmentGraph {
                    nodes: vec![
                        node(frag(1000.0, 1.0), &[]),
                        node(frag(1000.0, 1.0), &[]),
                        node(frag(1000.0, 1.0), &[]),
                        node(frag(150.0, 0.0), &[0, 1, 2]),
                    ],
                },
                &[0, 1, 2, 0],
                1.3,
            )],
        }
    });

    // Co-located branches share the host: both exit at 2.0, aggregation to 2.1.
    s.push(Scenario {
        name: "co-located branches",
        hosts: hosts(&[1000.0]),
        step_s: 1.0,
        jobs: vec![job(
            0.0,
            FragmentGraph {
                nodes: vec![
                    node(frag(1000.0, 3.0), &[]),
                    node(frag(1000.0, 3.0), &[]),
                    node(frag(100.0, 0.0), &[0, 1]),
                ],
            },
            &[0, 0, 0],
            2.1,
        )],
    });

    // First job alone for 1 s (1000 of 2000 done); then 500 each: the late
    // job's 500 MI ends at 2.0; the first has 500 left at full rate, 2.5.
    s.push(Scenario {
        name: "late arrival sharing",
        hosts: hosts(&[1000.0]),
        step_s: 1.0,
        jobs: vec![
            job(0.0, chain(&[frag(2000.0, 0.0)]), &[0], 2.5),
            job(1.0, chain(&[frag(500.0, 0.0)]), &[0], 2.0),
        ],
    });

    // A and C share until 2.0; B (A's successor) then runs alone to 3.0.
    s.push(Scenario {
        name: "blocked successor does not share",
        hosts: hosts(&[1000.0]),
        step_s: 1.0,
        jobs: vec![
            job(
                0.0,
                chain(&[frag(1000.0, 0.0), frag(1000.0, 0.0)]),
                &[0, 0],
                3.0,
            ),
            job(0.0, chain(&[frag(1000.0, 0.0)]), &[0], 2.0),
        ],
    });

    // D runs alone on host 1 until B's input lands at 1.0 + 1.0 = 2.0 (D has
    // 500 left); they share 500 each, D exits at 3.0 and B (500 left) at 3.5.
    s.push(Scenario {
        name: "transfer overlaps compute",
        hosts: hosts(&[1000.0, 1000.0]),
        step_s: 1.0,
        jobs: vec![
            job(
                0.0,
                chain(&[frag(1000.0, 10.0), frag(1000.0, 0.0)]),
                &[0, 1],
                3.5,
            ),
            job(0.0, chain(&[frag(2500.0, 0.0)]), &[1], 3.0),
        ],
    });

    // Bandwidth is the slower endpoint: 5 MB at 10 MB/s plus 0.1 latency.
    s.push({
        let mut h = hosts(&[1000.0, 1000.0]);
        h[0].bandwidth_mbps = 20.0;
        h[1].latency_base_s = 0.1;
        Scenario {
            name: "asymmetric bandwidth",
            hosts: h,
            step_s: 1.0,
            jobs: vec![job(
                0.0,
                chain(&[frag(1000.0, 5.0), frag(1000.0, 0.0)]),
                &[0, 1],
                2.6,
            )],
        }
    });

    // 1500 MIPS each until the small one exits at 1.0; 3000 MI left at 3000 MIPS.
    s.push(Scenario {
        name: "fast host sharing",
        hosts: hosts(&[3000.0]),
        step_s: 1.0,
        jobs: vec![
            job(0.0, chain(&[frag(1500.0, 0.0)]), &[0], 1.0),
            job(0.0, chain(&[frag(4500.0, 0.0)]), &[0], 2.0),
        ],
    });

    // Branch X (1000 + 500) ends at 1.5, Y (1000 + 1000) at 2.0; zero-size
    // outputs still pay 0.2 latency; aggregation 200 MI from 2.2 to 2.4.
    s.push({
        let mut h = hosts(&[1000.0, 1000.0, 1000.0]);
        for x in &mut h {
            x.latency_base_s = 0.2;
        }
        Scenario {
            name: "two-level branches",
            hosts: h,
            step_s: 1.0,
            jobs: vec![job(
                0.0,
                FragmentGraph {
                    nodes: vec![
                        node(frag(1000.0, 0.0), &[]),
                        node(frag(1000.0, 0.0), &[]),
                        node(frag(500.0, 0.0), &[0]),
                        node(frag(1000.0, 0.0), &[1]),
                        node(frag(200.0, 0.0), &[2, 3]),
                    ],
                },
                &[0, 1, 0, 1, 2],
                2.4,
            )],
        }
    });

    // Dispatched at 2.0; 3000 MI at 1500 MIPS.
    s.push(Scenario {
        name: "late dispatch",
        hosts: hosts(&[1500.0]),
        step_s: 1.0,
        jobs: vec![job(2.0, chain(&[frag(3000.0, 0.0)]), &[0], 4.0)],
    });

    // Two fragments share host 0 (exit 2.0), a third alone on host 1 (0.5).
    s.push(Scenario {
        name: "mixed hosts",
        hosts: hosts(&[1000.0, 1000.0]),
        step_s: 1.0,
        jobs: vec![
            job(0.0, chain(&[frag(1000.0, 0.0)]), &[0], 2.0),
            job(0.0, chain(&[frag(1000.0, 0.0)]), &[0], 2.0),
            job(0.0, chain(&[frag(500.0, 0.0)]), &[1], 0.5),
        ],
    });

    // Zero-size hand-off across hosts costs only latency: 0.5 + 0.3 + 0.5.
    s.push({
        let mut h = hosts(&[1000.0, 1000.0]);
        h[1].latency_base_s = 0.3;
        Scenario {
            name: "latency-only hand-off",
            hosts: h,
            step_s: 1.0,
            jobs: vec![job(
                0.0,
                chain(&[frag(500.0, 0.0), frag(500.0, 0.0)]),
                &[0, 1],
                1.3,
            )],
        }
    });

    // Six fragments on three hosts, two workloads interleaving. Job 0 chain
    // h0 -> h1 (1000 each, 2 MB), job 1 chain h1 -> h2 (1000, 1500; 0 MB).
    // h1: job 1's head alone from 0 to 1.0 (rate 1000). Job 0 head done 1.0
    // on h0; its output reaches h1 at 1.2 and runs alone to 2.2.
    // Job 1 head output reaches h2 at 1.0 (no latency), runs 1500 MI to 2.5.
    s.push(Scenario {
        name: "pipelined workloads",
        hosts: hosts(&[1000.0, 1000.0, 1000.0]),
        step_s: 0.5,
        jobs: vec![
            job(
                0.0,
                chain(&[frag(1000.0, 2.0), frag(1000.0, 0.0)]),
                &[0, 1],
                2.2,
            ),
            job(
                0.0,
                chain(&[frag(1000.0, 0.0), frag(1500.0, 0.0)]),
                &[1, 2],
                2.5,
            ),
        ],
    });

    s
}
