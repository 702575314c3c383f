//! How chunk inputs reach agent ports.
//!
//! The first agent of a chunk receives the chunk's input slots: a slot binds
//! to the port whose name or alternate name equals the slot name, and any
//! slots left over bind positionally, in slot order, to the ports left over.
//! Every later agent receives the previous agent's output on its first input
//! port; its other ports can only bind chunk slots by name.

use crate::registry::ToolSpec;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PortSource {
    /// A chunk input slot, by slot name.
    Slot(String),
    /// The output of the previous agent in the chunk.
    Pipeline,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AgentBinding {
    /// `(port index, source)` for every bound port.
    pub ports: Vec<(usize, PortSource)>,
    /// Slots offered to the first agent that no port accepts.
    pub unbound_slots: Vec<String>,
    /// Required ports with no source.
    pub missing_required: Vec<usize>,
}

impl AgentBinding {
    pub fn source_of(&self, port: usize) -> Option<&PortSource> {
        self.ports.iter().find(|(p, _)| *p == port).map(|(_, s)| s)
    }
}

/// Binds `spec`'s input ports for an agent at `position` in its chunk, given
/// the chunk's slot names in binding order.
pub fn bind_agent(spec: &ToolSpec, position: usize, slots: &[&str]) -> AgentBinding {
    let mut binding = AgentBinding::default();
    let mut taken = vec![false; spec.inputs.len()];

    if position == 0 {
        let mut leftover = Vec::new();
        for slot in slots {
            match (0..spec.inputs.len()).find(|&i| !taken[i] && spec.inputs[i].answers_to(slot)) {
                Some(i) => {
                    taken[i] = true;
                    binding.ports.push((i, PortSource::Slot(slot.to_string())));
                }
                None => leftover.push(*slot),
            }
        }
        for slot in leftover {
            match (0..spec.inputs.len()).find(|&i| !taken[i]) {
                Some(i) => {
                    taken[i] = true;
                    binding.ports.push((i, PortSource::Slot(slot.to_string())));
                }
                None => binding.unbound_slots.push(slot.to_string()),
            }
        }
    } else {
        if !spec.inputs.is_empty() {
            taken[0] = true;
            binding.ports.push((0, PortSource::Pipeline));
        }
        for (i, port) in spec.inputs.iter().enumerate().skip(1) {
            if let Some(slot) = slots.iter().find(|s| port.answers_to(s)) {
                taken[i] = true;
                binding.ports.push((i, PortSource::Slot(slot.to_string())));
            }
        }
    }

    binding.ports.sort_by_key(|(i, _)| *i);
    binding.missing_required = (0..spec.inputs.len()).filter(|&i| !taken[i] && !spec.inputs[i].optional).collect();
    binding
}
