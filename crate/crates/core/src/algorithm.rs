use std::fmt;

use crate::client::ClientOpt;
use crate::server::ServerOpt;

/// A (client mechanism, server optimizer) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Algorithm {
    pub opt_c: ClientOpt,
    pub opt_s: ServerOpt,
}

impl Algorithm {
    pub fn new(opt_c: ClientOpt, opt_s: ServerOpt) -> Self {
        Self { opt_c, opt_s }
    }

    /// All sixteen pairs, client mechanism major.
    pub fn grid() -> impl Iterator<Item = Algorithm> {
        ClientOpt::ALL.into_iter().flat_map(|c| ServerOpt::ALL.into_iter().map(move |s| Algorithm::new(c, s)))
    }

    /// Display name; the established baselines keep their usual names.
    pub fn name(self) -> &'static str {
        use ClientOpt as C;
        use ServerOpt as S;
        match (self.opt_c, self.opt_s) {
            (C::Sgd, S::Sgd) => "FedAvg",
            (C::Sgd, S::Adam) => "FedAdam",
            (C::Sgd, S::Adagrad) => "FedAdagrad",
            (C::Sgd, S::Yogi) => "FedYogi",
            (C::Prox, S::Sgd) => "FedProx",
            (C::Prox, S::Adam) => "ProxAdam",
            (C::Prox, S::Adagrad) => "ProxAdagrad",
            (C::Prox, S::Yogi) => "ProxYogi",
            (C::Scaf, S::Sgd) => "Scaffold",
            (C::Scaf, S::Adam) => "ScafAdam",
            (C::Scaf, S::Adagrad) => "ScafAdagrad",
            (C::Scaf, S::Yogi) => "ScafYogi",
            (C::Nova, S::Sgd) => "FedNova",
            (C::Nova, S::Adam) => "NovaAdam",
            (C::Nova, S::Adagrad) => "NovaAdagrad",
            (C::Nova, S::Yogi) => "NovaYogi",
        }
    }

    /// Whether this pair is one of the published baselines rather than a
    /// new combination.
    pub fn is_baseline(self) -> bool {
        self.opt_c == ClientOpt::Sgd || self.opt_s == ServerOpt::Sgd
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn sixteen_distinct_names_seven_baselines() {
        let names: HashSet<_> = Algorithm::grid().map(Algorithm::name).collect();
        assert_eq!(names.len(), 16);
        assert_eq!(Algorithm::grid().filter(|a| a.is_baseline()).count(), 7);
        assert_eq!(Algorithm::new(ClientOpt::Prox, ServerOpt::Yogi).to_string(), "ProxYogi");
    }
}
