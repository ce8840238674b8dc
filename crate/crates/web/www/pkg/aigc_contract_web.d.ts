/* tslint:disable */
/* eslint-disable */

/**
 * A small diffusion policy trained in the page.
 */
export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    constructor(seed: bigint);
    /**
     * Trains from scratch for `steps` interactions; returns the eval curve as JSON.
     */
    train(steps: number): string;
    trained(): boolean;
    /**
     * Menus decoded from every chain iterate `c_T .. c_0` (clipped to the
     * action box) for one state, as JSON.
     */
    trajectory(l_max: number, p_low: number, theta_low: number, theta_high: number, noise_seed: bigint): string;
}

/**
 * Slacks, feasibility and client utility of a two-type menu, as JSON.
 */
export function check_menu(l_max: number, p_low: number, theta_low: number, theta_high: number, latency: Float64Array, reward: Float64Array): string;

/**
 * Exact optimal menu for a two-type state, with its binding constraints.
 */
export function solve_oracle(l_max: number, p_low: number, theta_low: number, theta_high: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly check_menu: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
    readonly demo_new: (a: bigint) => number;
    readonly demo_train: (a: number, b: number) => [number, number, number, number];
    readonly demo_trained: (a: number) => number;
    readonly demo_trajectory: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number, number];
    readonly solve_oracle: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
