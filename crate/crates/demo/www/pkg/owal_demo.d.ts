/* tslint:disable */
/* eslint-disable */

/**
 * Browser handle around [`Playground`].
 */
export class Session {
    free(): void;
    [Symbol.dispose](): void;
    constructor(seed: bigint);
    observe(x: number): void;
    samples(): number;
    /**
     * Plot data as JSON.
     */
    snapshot(criterion: string): string;
    /**
     * `criterion` is one of US, IVR-IW, IVR-LW, B, QUANTILE.
     */
    step(criterion: string): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_session_free: (a: number, b: number) => void;
    readonly session_new: (a: bigint) => [number, number, number];
    readonly session_observe: (a: number, b: number) => [number, number];
    readonly session_samples: (a: number) => number;
    readonly session_snapshot: (a: number, b: number, c: number) => [number, number, number, number];
    readonly session_step: (a: number, b: number, c: number) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
