//! Synthetic labeled-corpus generator: templated Solidity-like contracts with
//! pool-randomized identifiers, a configurable share of which carry exactly
//! one known vulnerable pattern at a recorded line.
//!
//! Each vulnerable template plants its pattern so the matching detector in
//! `eval` flags the annotated line, and precedes it with a template-specific
//! lead statement so that models trained on the labeled corpus see a
//! distinctive context right before each label token.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Annotation, CorpusError, Origin, SourceFile};
use crate::labeling::VulnType;

/// Parameters for one synthetic corpus.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n_functions: usize,
    /// Share of files carrying one injected vulnerable pattern.
    pub vuln_fraction: f64,
    /// Types to cycle through for the vulnerable share.
    pub vuln_types: Vec<VulnType>,
    pub seed: u64,
}

#[derive(Debug, Default)]
pub struct SynthOutcome {
    pub files: Vec<SourceFile>,
    /// Ground truth: one entry per vulnerable file.
    pub annotations: Vec<Annotation>,
}

const CONTRACT_NAMES: &[&str] = &[
    "TokenVault",
    "CoinSafe",
    "LedgerBank",
    "PayoutHub",
    "EscrowBox",
    "FundPool",
    "TrustKeeper",
    "AssetStore",
    "CreditLine",
    "StakeHouse",
    "BountyDesk",
    "SavingsCell",
    "MarketTill",
    "PledgeJar",
    "RewardSink",
    "DepositDock",
];

enum AnnotatedLine {
    None,
    Signature,
    Body(usize),
}

struct FnSection {
    comment: String,
    signature: String,
    body: Vec<String>,
    annotated: AnnotatedLine,
}

struct Template {
    decls: Vec<String>,
    sections: Vec<FnSection>,
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &[&'a str]) -> &'a str {
    items[rng.random_range(0..items.len())]
}

fn secure_template(rng: &mut ChaCha8Rng) -> Template {
    match rng.random_range(0..7u32) {
        0 => {
            let amt = pick(rng, &["_amount", "_value", "_tokens"]);
            Template {
                decls: vec![
                    "mapping(address => uint) public balances;".into(),
                    "address public owner;".into(),
                ],
                sections: vec![FnSection {
                    comment: pick(
                        rng,
                        &[
                            "// Moves tokens from the caller to a recipient",
                            "// Transfers a token amount to another account",
                        ],
                    )
                    .into(),
                    signature: format!("function transferTokens(address _to, uint {amt}) public {{"),
                    body: vec![
                        format!("require(balances[msg.sender] >= {amt});"),
                        format!("balances[msg.sender] = balances[msg.sender].sub({amt});"),
                        format!("balances[_to] = balances[_to].add({amt});"),
                    ],
                    annotated: AnnotatedLine::None,
                }],
            }
        }
        1 => {
            let tmp = pick(rng, &["amount", "payout", "owed"]);
            Template {
                decls: vec!["mapping(address => uint) public balances;".into()],
                sections: vec![FnSection {
                    comment: pick(
                        rng,
                        &[
                            "// Withdraws the full caller balance safely",
                            "// Pays out what the caller is owed",
                        ],
                    )
                    .into(),
                    signature: "function withdrawBalance() public {".into(),
                    body: vec![
                        format!("uint {tmp} = balances[msg.sender];"),
                        format!("require({tmp} > 0);"),
                        "balances[msg.sender] = 0;".into(),
                        format!("require(msg.sender.send({tmp}));"),
                    ],
                    annotated: AnnotatedLine::None,
                }],
            }
        }
        2 => {
            let sec = pick(rng, &["_seconds", "_extra", "_delta"]);
            Template {
                decls: vec![
                    "mapping(address => uint) public lockTime;".into(),
                    "uint public maxLockTime;".into(),
                ],
                sections: vec![FnSection {
                    comment: pick(
                        rng,
                        &[
                            "// Extends the caller lock with an upper bound",
                            "// Adds bounded time to the caller lock",
                        ],
                    )
                    .into(),
                    signature: format!("function extendLockTime(uint {sec}) public {{"),
                    body: vec![
                        format!("require({sec} < maxLockTime);"),
                        format!("lockTime[msg.sender] = lockTime[msg.sender].add({sec});"),
                    ],
                    annotated: AnnotatedLine::None,
                }],
            }
        }
        3 => Template {
            decls: vec![
                "address public owner;".into(),
                "bool public vaultSealed;".into(),
            ],
            sections: vec![FnSection {
                comment: pick(
                    rng,
                    &[
                        "// Lets the owner seal the vault",
                        "// Marks the vault closed for new activity",
                    ],
                )
                .into(),
                signature: "function sealVault() public {".into(),
                body: vec![
                    "require(msg.sender == owner);".into(),
                    "vaultSealed = true;".into(),
                ],
                annotated: AnnotatedLine::None,
            }],
        },
        4 => Template {
            decls: vec![
                "mapping(address => uint) public contributorBalances;".into(),
                "bool public refundStatus;".into(),
            ],
            sections: vec![FnSection {
                comment: pick(
                    rng,
                    &[
                        "// Refunds the caller once refunds are open",
                        "// Returns the caller contribution when enabled",
                    ],
                )
                .into(),
                signature: "function refund() public {".into(),
                body: vec![
                    "require(refundStatus);".into(),
                    "uint refundValue = contributorBalances[msg.sender];".into(),
                    "contributorBalances[msg.sender] = 0;".into(),
                    "msg.sender.transfer(refundValue);".into(),
                ],
                annotated: AnnotatedLine::None,
            }],
        },
        5 => Template {
            decls: vec![
                "mapping(address => uint) public balances;".into(),
                "uint public depositTotal;".into(),
            ],
            sections: vec![FnSection {
                comment: pick(
                    rng,
                    &[
                        "// Records an incoming deposit for the caller",
                        "// Credits the sent value to the caller",
                    ],
                )
                .into(),
                signature: "function deposit() public payable {".into(),
                body: vec![
                    "balances[msg.sender] = balances[msg.sender].add(msg.value);".into(),
                    "depositTotal = depositTotal.add(msg.value);".into(),
                ],
                annotated: AnnotatedLine::None,
            }],
        },
        _ => Template {
            decls: vec!["address public owner;".into()],
            sections: vec![FnSection {
                comment: pick(
                    rng,
                    &[
                        "// Lets the owner retire the contract",
                        "// Shuts the contract down for the owner",
                    ],
                )
                .into(),
                signature: "function retireContract() public {".into(),
                body: vec![
                    "require(msg.sender == owner);".into(),
                    "selfdestruct(owner);".into(),
                ],
                annotated: AnnotatedLine::None,
            }],
        },
    }
}

fn vulnerable_template(rng: &mut ChaCha8Rng, vt: VulnType) -> Template {
    match vt {
        VulnType::IntegerOverflowUnderflow => {
            let sec = pick(rng, &["_seconds", "_extra"]);
            Template {
                decls: vec![
                    "mapping(address => uint) public lockTime;".into(),
                    "uint public lockWindow;".into(),
                    "uint public defaultWindow;".into(),
                ],
                sections: vec![FnSection {
                    comment: pick(
                        rng,
                        &[
                            "// Extends the lock period for the caller",
                            "// Adds time to the caller lock",
                        ],
                    )
                    .into(),
                    signature: format!("function increaseLockTime(uint {sec}) public {{"),
                    body: vec![
                        "lockWindow = defaultWindow;".into(),
                        format!("lockTime[msg.sender] += {sec};"),
                    ],
                    annotated: AnnotatedLine::Body(1),
                }],
            }
        }
        VulnType::TxOrigin => Template {
            decls: vec![
                "address public owner;".into(),
                "address public adminContact;".into(),
                "address public ownerRegistry;".into(),
                "uint public jackpot;".into(),
            ],
            sections: vec![FnSection {
                comment: pick(
                    rng,
                    &[
                        "// Pays out the jackpot to the caller",
                        "// Sends the jackpot to the winning caller",
                    ],
                )
                .into(),
                signature: "function claimJackpot() public {".into(),
                body: vec![
                    "adminContact = ownerRegistry;".into(),
                    "require(tx.origin == owner);".into(),
                    "msg.sender.transfer(jackpot);".into(),
                ],
                annotated: AnnotatedLine::Body(1),
            }],
        },
        VulnType::TimestampDependency => Template {
            decls: vec![
                "mapping(address => uint) public contributorBalances;".into(),
                "uint public icoFinish;".into(),
                "bool public saleClosed;".into(),
                "bool public closingFlag;".into(),
            ],
            sections: vec![FnSection {
                comment: pick(
                    rng,
                    &[
                        "// Refunds the caller after the sale closes",
                        "// Pays back the caller when the sale ends",
                    ],
                )
                .into(),
                signature: "function refundPayment() public {".into(),
                body: vec![
                    "saleClosed = closingFlag;".into(),
                    "require(now > icoFinish);".into(),
                    "msg.sender.transfer(contributorBalances[msg.sender]);".into(),
                ],
                annotated: AnnotatedLine::Body(1),
            }],
        },
        VulnType::UncheckedCall => Template {
            decls: vec![
                "address public payee;".into(),
                "uint public weeklyLimit;".into(),
                "uint public payoutReady;".into(),
                "uint public queueHead;".into(),
            ],
            sections: vec![FnSection {
                comment: pick(
                    rng,
                    &[
                        "// Sends the weekly allowance to the payee",
                        "// Releases the scheduled payout to the payee",
                    ],
                )
                .into(),
                signature: "function releaseAllowance() public {".into(),
                body: vec![
                    "payoutReady = queueHead;".into(),
                    "payee.send(weeklyLimit);".into(),
                ],
                annotated: AnnotatedLine::Body(1),
            }],
        },
        VulnType::UnprotectedSuicide => Template {
            decls: vec![
                "address public caretaker;".into(),
                "uint public teardownStage;".into(),
                "uint public finalStage;".into(),
            ],
            sections: vec![FnSection {
                comment: pick(
                    rng,
                    &[
                        "// Removes the contract from the chain",
                        "// Tears the contract down completely",
                    ],
                )
                .into(),
                signature: "function shutDownVault() public {".into(),
                body: vec![
                    "teardownStage = finalStage;".into(),
                    "selfdestruct(msg.sender);".into(),
                ],
                annotated: AnnotatedLine::Body(1),
            }],
        },
        VulnType::Reentrancy => Template {
            decls: vec![
                "mapping(address => uint) public deposits;".into(),
                "uint public reentryNote;".into(),
                "uint public callMarker;".into(),
            ],
            sections: vec![FnSection {
                comment: pick(
                    rng,
                    &[
                        "// Collects the caller deposit balance",
                        "// Hands the caller their stored deposit",
                    ],
                )
                .into(),
                signature: "function collectDeposit(uint _am) public {".into(),
                body: vec![
                    "reentryNote = callMarker;".into(),
                    "if (msg.sender.call.value(_am)()) { deposits[msg.sender] -= _am; }".into(),
                ],
                annotated: AnnotatedLine::Body(1),
            }],
        },
        VulnType::DelegateCall => Template {
            decls: vec![
                "address public pluginTarget;".into(),
                "uint public proxyMode;".into(),
                "uint public dynamicMode;".into(),
            ],
            sections: vec![FnSection {
                comment: pick(
                    rng,
                    &[
                        "// Runs a plugin action for the caller",
                        "// Forwards the call data to the plugin",
                    ],
                )
                .into(),
                signature: "function runPlugin(bytes _data) public {".into(),
                body: vec![
                    "proxyMode = dynamicMode;".into(),
                    "pluginTarget.delegatecall(_data);".into(),
                ],
                annotated: AnnotatedLine::Body(1),
            }],
        },
        VulnType::NestedCall => Template {
            decls: vec![
                "address[] public players;".into(),
                "uint public prize;".into(),
                "uint public batchCursor;".into(),
                "uint public loopBudget;".into(),
            ],
            sections: vec![FnSection {
                comment: pick(
                    rng,
                    &[
                        "// Pays every registered player in one pass",
                        "// Walks the full player list paying prizes",
                    ],
                )
                .into(),
                signature: "function payAllPlayers() public {".into(),
                body: vec![
                    "batchCursor = loopBudget;".into(),
                    "for (uint i = 0; i < players.length; i++) { players[i].transfer(prize); }"
                        .into(),
                ],
                annotated: AnnotatedLine::Body(1),
            }],
        },
        VulnType::TransactionOrderDependency => Template {
            decls: vec![
                "uint public bounty;".into(),
                "uint public queuePosition;".into(),
                "uint public orderSlot;".into(),
            ],
            sections: vec![
                FnSection {
                    comment: pick(
                        rng,
                        &[
                            "// Pays the standing bounty to the caller",
                            "// Claims the open bounty for the caller",
                        ],
                    )
                    .into(),
                    signature: "function claimBounty() public {".into(),
                    body: vec![
                        "queuePosition = orderSlot;".into(),
                        "msg.sender.transfer(bounty);".into(),
                    ],
                    annotated: AnnotatedLine::Body(1),
                },
                FnSection {
                    comment: "// Updates the standing bounty amount".into(),
                    signature: "function setBounty(uint _value) public {".into(),
                    body: vec!["bounty = _value;".into()],
                    annotated: AnnotatedLine::None,
                },
            ],
        },
        VulnType::FrozenEther => Template {
            decls: vec!["uint public donationTotal;".into()],
            sections: vec![FnSection {
                comment: pick(
                    rng,
                    &[
                        "// Accepts ether donations from any sender",
                        "// Takes donations and tracks the total",
                    ],
                )
                .into(),
                signature: "function acceptDonation() public payable {".into(),
                body: vec!["donationTotal = donationTotal.add(msg.value);".into()],
                annotated: AnnotatedLine::Signature,
            }],
        },
    }
}

fn assemble(name: &str, template: &Template) -> (String, Option<usize>) {
    let mut lines: Vec<String> = vec![
        "// SPDX-License-Identifier: MIT".into(),
        "pragma solidity ^0.4.24;".into(),
        String::new(),
        format!("contract {name} {{"),
    ];
    for d in &template.decls {
        lines.push(format!("    {d}"));
    }
    let mut annotated_line = None;
    for section in &template.sections {
        lines.push(String::new());
        lines.push(format!("    {}", section.comment));
        lines.push(format!("    {}", section.signature));
        if matches!(section.annotated, AnnotatedLine::Signature) {
            annotated_line = Some(lines.len());
        }
        for (i, stmt) in section.body.iter().enumerate() {
            lines.push(format!("        {stmt}"));
            if matches!(section.annotated, AnnotatedLine::Body(b) if b == i) {
                annotated_line = Some(lines.len());
            }
        }
        lines.push("    }".into());
    }
    lines.push("}".into());
    (lines.join("\n") + "\n", annotated_line)
}

/// Generate `n_functions` single-purpose contracts, a `vuln_fraction` share of
/// which carry one vulnerable pattern each. Deterministic for a given seed.
pub fn generate_synthetic_corpus(spec: &SynthSpec) -> Result<SynthOutcome, CorpusError> {
    if !(0.0..=1.0).contains(&spec.vuln_fraction) {
        return Err(CorpusError::InvalidConfig(format!(
            "vuln_fraction must lie in [0, 1], got {}",
            spec.vuln_fraction
        )));
    }
    let n_vuln = (spec.n_functions as f64 * spec.vuln_fraction).round() as usize;
    if n_vuln > 0 && spec.vuln_types.is_empty() {
        return Err(CorpusError::InvalidConfig(
            "vuln_fraction > 0 requires at least one vulnerability type".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut indices: Vec<usize> = (0..spec.n_functions).collect();
    indices.shuffle(&mut rng);
    let mut is_vuln = vec![false; spec.n_functions];
    for &i in indices.iter().take(n_vuln) {
        is_vuln[i] = true;
    }

    let mut outcome = SynthOutcome::default();
    let mut vuln_counter = 0usize;
    for i in 0..spec.n_functions {
        let name = pick(&mut rng, CONTRACT_NAMES);
        let (template, vuln_type) = if is_vuln[i] {
            let vt = spec.vuln_types[vuln_counter % spec.vuln_types.len()];
            vuln_counter += 1;
            (vulnerable_template(&mut rng, vt), Some(vt))
        } else {
            (secure_template(&mut rng), None)
        };
        let (text, annotated_line) = assemble(name, &template);
        let address = format!("synthetic:{i:06}");
        let file_name = format!("{name}.sol");
        if let (Some(vt), Some(line)) = (vuln_type, annotated_line) {
            outcome.annotations.push(Annotation {
                address: address.clone(),
                file_name: file_name.clone(),
                vuln_type: vt,
                line,
            });
        }
        outcome.files.push(SourceFile {
            address,
            file_name,
            text,
            origin: Origin::Synthetic,
        });
    }
    Ok(outcome)
}
