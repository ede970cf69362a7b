//! Site-selection policies. The cost-driven matchmaker is the interesting
//! one; the rest are baselines that swap only the site choice and share
//! every other piece of the pipeline.

use std::fmt;
use std::str::FromStr;

/// How the execution site is chosen for each job.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchedulerPolicy {
    /// Full cost matrix over network, computation and data transfer.
    Diana,
    /// The replica-hosting site with the shortest local queue; jobs without
    /// input data stay at their submit site.
    DataLocal,
    /// Lowest computation cost, ignoring data and network entirely.
    ComputeGreedy,
    /// Uniformly random site from the run's seeded stream.
    Random,
}

impl SchedulerPolicy {
    pub const ALL: [SchedulerPolicy; 4] = [
        SchedulerPolicy::Diana,
        SchedulerPolicy::DataLocal,
        SchedulerPolicy::ComputeGreedy,
        SchedulerPolicy::Random,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SchedulerPolicy::Diana => "diana",
            SchedulerPolicy::DataLocal => "data_local",
            SchedulerPolicy::ComputeGreedy => "compute_greedy",
            SchedulerPolicy::Random => "random",
        }
    }
}

impl fmt::Display for SchedulerPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "diana" => Ok(SchedulerPolicy::Diana),
            "data_local" => Ok(SchedulerPolicy::DataLocal),
            "compute_greedy" => Ok(SchedulerPolicy::ComputeGreedy),
            "random" => Ok(SchedulerPolicy::Random),
            other => Err(format!(
                "unknown scheduler `{other}` (expected diana, data_local, compute_greedy or random)"
            )),
        }
    }
}
