//! Win-rate tables.

use std::collections::BTreeMap;
use std::fmt;

use crate::game::{AgentId, Role};

use super::log::GameLog;

/// Wins out of games, shown as a percentage rounded half-up to two decimals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RateCell {
    pub wins: u64,
    pub games: u64,
}

impl RateCell {
    pub fn new(wins: u64, games: u64) -> Self {
        RateCell { wins, games }
    }

    /// Rate in hundredths of a percent, rounded half-up. `None` for zero games.
    pub fn basis_points(self) -> Option<u64> {
        (self.games > 0).then(|| (self.wins * 20_000 + self.games) / (2 * self.games))
    }

    pub fn percent(self) -> String {
        match self.basis_points() {
            Some(bp) => format!("{}.{:02}%", bp / 100, bp % 100),
            None => "-".to_string(),
        }
    }

    fn add(&mut self, won: bool) {
        self.games += 1;
        self.wins += u64::from(won);
    }
}

impl fmt::Display for RateCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({}/{})", self.percent(), self.wins, self.games)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WinRateRow {
    pub team_label: String,
    pub per_role: BTreeMap<Role, RateCell>,
    pub total: RateCell,
}

impl WinRateRow {
    fn new(team_label: String) -> Self {
        let per_role = Role::ALL.iter().map(|&r| (r, RateCell::default())).collect();
        WinRateRow { team_label, per_role, total: RateCell::default() }
    }
}

/// Every seat under one label.
pub fn single_label(label: &str) -> BTreeMap<AgentId, String> {
    AgentId::all().map(|id| (id, label.to_string())).collect()
}

/// One row per label. A seat wins a game when its team wins. Aborted or
/// malformed logs are skipped with a warning.
pub fn compute_win_rates(logs: &[GameLog], seat_labels: &BTreeMap<AgentId, String>) -> Vec<WinRateRow> {
    let mut rows: BTreeMap<&str, WinRateRow> = BTreeMap::new();
    for (i, log) in logs.iter().enumerate() {
        let (Some(outcome), Ok(assignment)) = (log.outcome(), log.assignment()) else {
            tracing::warn!(game = i, "skipping aborted or incomplete log");
            continue;
        };
        for (seat, role) in &assignment {
            let Some(label) = seat_labels.get(seat) else { continue };
            let row = rows.entry(label).or_insert_with(|| WinRateRow::new(label.clone()));
            let won = role.team() == outcome.winner;
            row.per_role.entry(*role).or_default().add(won);
            row.total.add(won);
        }
    }
    rows.into_values().collect()
}

/// Plain-text table: one header line, then one line per row.
pub fn render_table(rows: &[WinRateRow]) -> String {
    let mut out = String::from("Team");
    for r in Role::ALL {
        out.push_str(&format!(" | {r}"));
    }
    out.push_str(" | Total\n");
    for row in rows {
        out.push_str(&row.team_label);
        for r in Role::ALL {
            out.push_str(&format!(" | {}", row.per_role.get(&r).copied().unwrap_or_default()));
        }
        out.push_str(&format!(" | {}\n", row.total));
    }
    out
}
