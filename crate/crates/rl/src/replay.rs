//! Fixed-capacity FIFO transition store with flat column storage.

use rand::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    /// Learned action component `a_drl`, before the model-based term is added.
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// True only for terminal states; truncation keeps bootstrapping.
    pub done: bool,
}

/// Columns of a sampled minibatch, row-major.
#[derive(Clone, Debug, Default)]
pub struct Batch {
    pub len: usize,
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_states: Vec<f64>,
    pub dones: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    state_dim: usize,
    action_dim: usize,
    /// Slot the next push writes to.
    head: usize,
    len: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_states: Vec<f64>,
    dones: Vec<bool>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, state_dim: usize, action_dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            state_dim,
            action_dim,
            head: 0,
            len: 0,
            states: vec![0.0; capacity * state_dim],
            actions: vec![0.0; capacity * action_dim],
            rewards: vec![0.0; capacity],
            next_states: vec![0.0; capacity * state_dim],
            dones: vec![false; capacity],
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Overwrites the oldest transition once full.
    pub fn push(&mut self, t: &Transition) {
        assert_eq!(t.state.len(), self.state_dim);
        assert_eq!(t.next_state.len(), self.state_dim);
        assert_eq!(t.action.len(), self.action_dim);
        let (n, m, i) = (self.state_dim, self.action_dim, self.head);
        self.states[i * n..(i + 1) * n].copy_from_slice(&t.state);
        self.next_states[i * n..(i + 1) * n].copy_from_slice(&t.next_state);
        self.actions[i * m..(i + 1) * m].copy_from_slice(&t.action);
        self.rewards[i] = t.reward;
        self.dones[i] = t.done;
        self.head = (self.head + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
    }

    /// `k`-th oldest stored transition.
    pub fn get(&self, k: usize) -> Option<Transition> {
        if k >= self.len {
            return None;
        }
        let i = (self.head + self.capacity - self.len + k) % self.capacity;
        Some(self.slot(i))
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = Transition> + '_ {
        (0..self.len).filter_map(move |k| self.get(k))
    }

    fn slot(&self, i: usize) -> Transition {
        let (n, m) = (self.state_dim, self.action_dim);
        Transition {
            state: self.states[i * n..(i + 1) * n].to_vec(),
            action: self.actions[i * m..(i + 1) * m].to_vec(),
            reward: self.rewards[i],
            next_state: self.next_states[i * n..(i + 1) * n].to_vec(),
            done: self.dones[i],
        }
    }

    /// Uniform sampling with replacement into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R, out: &mut Batch) {
        assert!(self.len > 0, "cannot sample from an empty buffer");
        let (n, m) = (self.state_dim, self.action_dim);
        out.len = batch;
        out.states.clear();
        out.actions.clear();
        out.rewards.clear();
        out.next_states.clear();
        out.dones.clear();
        for _ in 0..batch {
            let i = rng.gen_range(0..self.len);
            out.states.extend_from_slice(&self.states[i * n..(i + 1) * n]);
            out.actions.extend_from_slice(&self.actions[i * m..(i + 1) * m]);
            out.rewards.push(self.rewards[i]);
            out.next_states
                .extend_from_slice(&self.next_states[i * n..(i + 1) * n]);
            out.dones.push(if self.dones[i] { 1.0 } else { 0.0 });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(k: usize) -> Transition {
        let x = k as f64;
        Transition {
            state: vec![x, -x],
            action: vec![x * 0.5],
            reward: x,
            next_state: vec![x + 1.0, -x - 1.0],
            done: k.is_multiple_of(3),
        }
    }

    #[test]
    fn sampling_returns_stored_rows() {
        let mut buf = ReplayBuffer::new(10, 2, 1);
        for k in 0..7 {
            buf.push(&tr(k));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut b = Batch::default();
        buf.sample_into(32, &mut rng, &mut b);
        for r in 0..32 {
            let k = b.rewards[r] as usize;
            assert_eq!(&b.states[2 * r..2 * r + 2], tr(k).state.as_slice());
            assert_eq!(b.dones[r] == 1.0, tr(k).done);
        }
    }

    proptest! {
        #[test]
        fn fifo_eviction_preserves_order(capacity in 1usize..40, extra in 0usize..60) {
            let mut buf = ReplayBuffer::new(capacity, 2, 1);
            for k in 0..capacity + extra {
                buf.push(&tr(k));
            }
            prop_assert_eq!(buf.len(), capacity);
            let kept: Vec<usize> = buf.iter().map(|t| t.reward as usize).collect();
            let expected: Vec<usize> = (extra..capacity + extra).collect();
            prop_assert_eq!(kept, expected);
        }
    }
}
