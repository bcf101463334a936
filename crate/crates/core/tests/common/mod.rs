//! Shared fixtures for integration tests: learned corridor models are
//! expensive enough to build once and reuse.

use std::sync::OnceLock;

use egosym::data::{collect, Dataset};
use egosym::domains::corridor::make_corridor;
use egosym::ground::{ground_task, GroundedModel};
use egosym::partition::PartitionParams;
use egosym::symbols::{learn_portable, PortableModel, SymbolParams};

pub struct CorridorFixture {
    pub dataset: Dataset,
    pub model: PortableModel,
    pub grounded: GroundedModel,
}

pub fn corridor_fixture() -> &'static CorridorFixture {
    static FIXTURE: OnceLock<CorridorFixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let mut env = make_corridor([0.0, 0.0], 0);
        let dataset = collect(&mut env, 2000, 0);
        let model = learn_portable(&dataset, &SymbolParams::default(), None).unwrap();
        let grounded = ground_task(
            &model,
            &dataset,
            &PartitionParams::default(),
            &Vec::new(),
        )
        .unwrap();
        CorridorFixture {
            dataset,
            model,
            grounded,
        }
    })
}
